"""Hybrid long-document summarization: cleaning, C2F-FAR extraction,
chunked chat-model summarization and evaluation."""

from .abstract import ChatSummarizer, FinalSummary, MockChatClient, PromptTemplate, summarize_document
from .cleaning import CleanConfig, CleanDocument, DocumentCleaner, RawText, ingest
from .embed import HashingSentenceEmbedder, HashingTokenEmbedder, LexicalMaskedPredictor
from .extract import C2FFARSummarizer, ExtractionConfig, ExtractiveSummary
from .metrics import MetricReport, aggregate, score_pair
from .segment import split_sentences, tokenize

__version__ = "0.1.0"

__all__ = [
    "ChatSummarizer",
    "FinalSummary",
    "MockChatClient",
    "PromptTemplate",
    "summarize_document",
    "CleanConfig",
    "CleanDocument",
    "DocumentCleaner",
    "RawText",
    "ingest",
    "HashingSentenceEmbedder",
    "HashingTokenEmbedder",
    "LexicalMaskedPredictor",
    "C2FFARSummarizer",
    "ExtractionConfig",
    "ExtractiveSummary",
    "MetricReport",
    "aggregate",
    "score_pair",
    "split_sentences",
    "tokenize",
]
