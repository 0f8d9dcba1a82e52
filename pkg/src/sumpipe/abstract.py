"""Chunked abstractive summarization through a chat-completion provider."""

from __future__ import annotations

import json
import logging
import math
import os
import re
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence, runtime_checkable

import httpx
from sklearn.base import BaseEstimator, TransformerMixin

from .exceptions import (
    ConfigError,
    EmptyResponseError,
    ProviderError,
    SummarizationError,
    TokenBudgetError,
)
from .segment import split_sentences

logger = logging.getLogger(__name__)

__all__ = [
    "TASKS",
    "STYLES",
    "ChunkPlan",
    "PromptTemplate",
    "FinalSummary",
    "ChatClient",
    "HTTPChatClient",
    "MockChatClient",
    "ReplayChatClient",
    "Conversation",
    "plan_chunks",
    "render_prompt",
    "expand_prompt",
    "estimate_tokens",
    "summarize_chunk",
    "refine_length",
    "paraphrase",
    "summarize_document",
    "rewrite_summary",
    "write_transcript",
    "read_transcript",
    "ChatSummarizer",
]

TASKS = ("summarize", "rewrite", "summarize_rewrite", "style_summarize")
STYLES = {
    "professional": "professional",
    "easy_to_understand": "easy to understand",
    "fact_oriented": "fact-oriented",
    "emotion_oriented": "emotion-oriented",
}
WORDS_PER_TOKEN = 0.75
SHORT_DRAFT_RATIO = 0.8

_SUMMARIZE = "Please summarize the following text in your own words in about {n} sentences."
_REWRITE = "Please rewrite the text in your own words."
_SUMMARIZE_REWRITE = "Please summarize and rewrite the text in your own words in about {n} sentences."
_STYLE = "Please summarize the article {name} in approximately {words} words using a {style} style."
_EXPAND = "Please expand the summary to about {n} sentences by adding more details."


@dataclass
class ChunkPlan:
    chunks: list[tuple[int, int]]
    max_words: int = 1500


@dataclass
class PromptTemplate:
    task: str = "summarize"
    target_sentences: int = 25
    target_words: int = 500
    style: str = "none"

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}; expected one of {TASKS}")
        if self.style != "none" and self.style not in STYLES:
            raise ConfigError(f"unknown style {self.style!r}")
        if (self.style != "none") != (self.task == "style_summarize"):
            raise ConfigError("a style is required for, and only for, task 'style_summarize'")
        if self.target_sentences < 1 or self.target_words < 1:
            raise ConfigError("prompt targets must be >= 1")


@dataclass
class FinalSummary:
    source_id: str
    chunks: list[str]
    merged: str
    transcript: list[dict] = field(default_factory=list)
    final: str | None = None

    @property
    def text(self) -> str:
        return self.final if self.final is not None else self.merged

    def to_dict(self) -> dict:
        return {"source_id": self.source_id, "chunks": list(self.chunks), "merged": self.merged,
                "final": self.final, "text": self.text}

    @classmethod
    def from_dict(cls, data: dict, transcript=None) -> "FinalSummary":
        return cls(data["source_id"], list(data["chunks"]), data["merged"], list(transcript or []),
                   data.get("final"))


@runtime_checkable
class ChatClient(Protocol):
    model: str

    def complete(self, messages: Sequence[dict]) -> str: ...


def plan_chunks(sentences, max_words: int = 1500) -> ChunkPlan:
    """Greedily pack sentences into chunks of at most ``max_words`` words.

    ``sentences`` is a list of sentence strings or an extractive summary.
    Sentences are never split, so one longer than ``max_words`` gets a chunk
    of its own. Chunks are half-open ranges over sentence positions.
    """
    if max_words < 1:
        raise ConfigError(f"max_words must be >= 1, got {max_words}")
    if hasattr(sentences, "sentences"):
        sentences = sentences.sentences
    chunks = []
    start, words = 0, 0
    for i, sentence in enumerate(sentences):
        n = len(sentence.split())
        if i > start and words + n > max_words:
            chunks.append((start, i))
            start, words = i, 0
        words += n
    if len(sentences) > start:
        chunks.append((start, len(sentences)))
    return ChunkPlan(chunks, max_words)


def render_prompt(t: PromptTemplate, text: str) -> str:
    """Instantiate the template; for ``style_summarize`` ``text`` is the article name."""
    if not text or not text.strip():
        raise ValueError("cannot render a prompt for empty text")
    if t.task == "summarize":
        return _SUMMARIZE.format(n=t.target_sentences) + "\n\n" + text
    if t.task == "rewrite":
        return _REWRITE + "\n\n" + text
    if t.task == "summarize_rewrite":
        return _SUMMARIZE_REWRITE.format(n=t.target_sentences) + "\n\n" + text
    return _STYLE.format(name=text, words=t.target_words, style=STYLES[t.style])


def expand_prompt(target_sentences: int) -> str:
    return _EXPAND.format(n=target_sentences)


def estimate_tokens(text: str) -> int:
    return math.ceil(len(text.split()) / WORDS_PER_TOKEN)


class Conversation:
    """One chat thread; every exchange is appended to ``transcript``."""

    def __init__(self, client: ChatClient, name: str, transcript: list | None = None):
        self.client = client
        self.name = name
        self.messages: list[dict] = []
        self.transcript = transcript if transcript is not None else []

    def ask(self, prompt: str) -> str:
        self.messages.append({"role": "user", "content": prompt})
        reply = self.client.complete(list(self.messages))
        if not reply or not reply.strip():
            raise EmptyResponseError()
        self.messages.append({"role": "assistant", "content": reply})
        self.transcript.append({
            "conversation": self.name,
            "turn": len(self.messages) // 2 - 1,
            "model": getattr(self.client, "model", ""),
            "prompt": prompt,
            "response": reply,
        })
        return reply


def _count_sentences(text: str) -> int:
    return len(split_sentences(text))


def summarize_chunk(conv: Conversation, chunk_text: str, t: PromptTemplate,
                    token_budget: int = 4096) -> str:
    prompt = render_prompt(t, chunk_text)
    needed = estimate_tokens(prompt)
    if needed > token_budget:
        raise TokenBudgetError(
            f"prompt needs ~{needed} tokens but the budget is {token_budget}; reduce max_words")
    return conv.ask(prompt)


def refine_length(conv: Conversation, draft: str, t: PromptTemplate) -> str:
    """Ask once for a longer summary if the draft is well short of the target."""
    if _count_sentences(draft) >= SHORT_DRAFT_RATIO * t.target_sentences:
        return draft
    return conv.ask(expand_prompt(t.target_sentences))


def paraphrase(client: ChatClient, text: str, transcript: list | None = None,
               name: str = "rewrite") -> str:
    if not text or not text.strip():
        raise ValueError("nothing to paraphrase")
    return Conversation(client, name, transcript).ask(render_prompt(PromptTemplate("rewrite"), text))


def summarize_document(client: ChatClient, summary, t: PromptTemplate | None = None,
                       max_words: int = 1500, token_budget: int = 4096) -> FinalSummary:
    """Summarize an extractive summary chunk by chunk and merge the results.

    Chunks are processed in order, each in its own conversation; summaries
    that come back too short get one expansion request. For
    ``summarize_rewrite`` the merged text gets a final summarize-and-rewrite
    pass. On failure a :class:`SummarizationError` carries the partial
    transcript.
    """
    t = t or PromptTemplate()
    if t.task == "style_summarize":
        raise ConfigError("style_summarize works on article names, not extracted text")
    sentences = summary.sentences
    source_id = getattr(summary, "source_id", "")
    plan = plan_chunks(sentences, max_words)
    chunk_template = t if t.task == "rewrite" else PromptTemplate("summarize", t.target_sentences)
    transcript: list[dict] = []
    outputs = []
    for k, (start, stop) in enumerate(plan.chunks):
        conv = Conversation(client, f"chunk-{k}", transcript)
        chunk_text = " ".join(sentences[start:stop])
        try:
            draft = summarize_chunk(conv, chunk_text, chunk_template, token_budget)
            if chunk_template.task == "summarize":
                draft = refine_length(conv, draft, chunk_template)
        except (ProviderError, TokenBudgetError) as exc:
            raise SummarizationError(f"chunk {k} of {source_id!r} failed: {exc}", transcript, k) from exc
        outputs.append(draft.strip())
    merged = "\n\n".join(outputs)
    result = FinalSummary(source_id, outputs, merged, transcript)
    if t.task == "summarize_rewrite" and merged:
        conv = Conversation(client, "final", transcript)
        try:
            result.final = conv.ask(render_prompt(t, merged)).strip()
        except ProviderError as exc:
            raise SummarizationError(f"final pass of {source_id!r} failed: {exc}", transcript) from exc
    return result


def rewrite_summary(client: ChatClient, final: FinalSummary) -> FinalSummary:
    """Paraphrase a finished summary in a fresh conversation (the R recipe)."""
    try:
        final.final = paraphrase(client, final.text, final.transcript, "final").strip()
    except ProviderError as exc:
        raise SummarizationError(f"rewrite of {final.source_id!r} failed: {exc}", final.transcript) from exc
    return final


def write_transcript(path, transcript) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for exchange in transcript:
            fh.write(json.dumps(exchange, sort_keys=True, ensure_ascii=False) + "\n")


def read_transcript(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


class HTTPChatClient:
    """Client for an OpenAI-style ``/v1/chat/completions`` endpoint."""

    def __init__(self, model="gpt-3.5-turbo", base_url=None, api_key=None, temperature=0.0,
                 max_retries=3, timeout=60.0, backoff=1.0, transport=None):
        self.model = model
        self.base_url = (base_url or os.environ.get("SUMPIPE_API_BASE") or "").rstrip("/")
        if not self.base_url:
            raise ProviderError("no chat base URL (set SUMPIPE_API_BASE)", retryable=False)
        api_key = api_key or os.environ.get("SUMPIPE_API_KEY")
        self.temperature = temperature
        self.max_retries = max_retries
        self.backoff = backoff
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._client = httpx.Client(timeout=timeout, headers=headers, transport=transport)

    def complete(self, messages):
        payload = {"model": self.model, "messages": list(messages), "temperature": self.temperature}
        url = f"{self.base_url}/v1/chat/completions"
        delay = self.backoff
        for attempt in range(self.max_retries + 1):
            try:
                resp = self._client.post(url, json=payload)
                if resp.status_code == 429 or resp.status_code >= 500:
                    raise httpx.HTTPStatusError(f"status {resp.status_code}", request=resp.request, response=resp)
                if resp.status_code >= 400:
                    raise ProviderError(f"chat request rejected with status {resp.status_code}: {resp.text[:200]}",
                                        retryable=False)
                content = resp.json()["choices"][0]["message"]["content"]
            except (httpx.HTTPError, KeyError, IndexError, TypeError, ValueError) as exc:
                if attempt == self.max_retries:
                    raise ProviderError(f"chat completion failed after {attempt + 1} attempts: {exc}") from exc
                logger.warning("chat attempt %d failed (%s); retrying in %.1fs", attempt + 1, exc, delay)
                time.sleep(delay)
                delay *= 2
                continue
            if not content or not content.strip():
                raise EmptyResponseError()
            return content


_TARGET = re.compile(r"about (\d+) sentences")
_STYLE_RE = re.compile(r"^Please summarize the article (.+) in approximately (\d+) words using an? (.+) style\.$")


class MockChatClient:
    """Offline stand-in for a chat model.

    Summaries are the first ``n`` sentences of the supplied text, rewrites
    echo the text, and expansion requests return the first ``n`` sentences
    of the text the conversation started with.
    """

    model = "mock-chat"

    def complete(self, messages):
        prompt = messages[-1]["content"]
        instruction, _, body = prompt.partition("\n\n")
        if instruction.startswith("Please expand the summary"):
            n = int(_TARGET.search(instruction).group(1))
            _, _, body = messages[0]["content"].partition("\n\n")
            return self._head(body, n)
        if instruction.startswith(_REWRITE):
            return body
        match = _TARGET.search(instruction)
        if match and body:
            return self._head(body, int(match.group(1)))
        style = _STYLE_RE.match(instruction)
        if style:
            name, words, tone = style.groups()
            return f"This is a {tone} summary of {name} in about {words} words."
        return body or instruction

    @staticmethod
    def _head(text, n):
        return " ".join(s.text for s in split_sentences(text)[:n])


class ReplayChatClient:
    """Replays a recorded transcript, checking each prompt matches the recording."""

    def __init__(self, transcript, model=None):
        if isinstance(transcript, (str, Path)):
            transcript = read_transcript(transcript)
        self.exchanges = list(transcript)
        self.model = model or (self.exchanges[0].get("model", "replay") if self.exchanges else "replay")
        self._pos = 0

    def complete(self, messages):
        if self._pos >= len(self.exchanges):
            raise ProviderError("replay transcript exhausted", retryable=False)
        expected = self.exchanges[self._pos]
        prompt = messages[-1]["content"]
        if prompt != expected["prompt"]:
            raise ProviderError(f"replay mismatch at exchange {self._pos}", retryable=False)
        self._pos += 1
        return expected["response"]


class ChatSummarizer(TransformerMixin, BaseEstimator):
    """Transformer from extractive summaries to :class:`FinalSummary` objects.

    ``rewrite=True`` paraphrases each finished summary in a fresh
    conversation afterwards (summarize, then rewrite).
    """

    def __init__(self, client=None, task="summarize", target_sentences=25, max_words=1500,
                 token_budget=4096, rewrite=False):
        self.client = client
        self.task = task
        self.target_sentences = target_sentences
        self.max_words = max_words
        self.token_budget = token_budget
        self.rewrite = rewrite

    def fit(self, X=None, y=None):
        self.template_ = PromptTemplate(self.task, self.target_sentences)
        self.client_ = self.client if self.client is not None else MockChatClient()
        return self

    def transform(self, X):
        out = []
        for summary in X:
            final = summarize_document(self.client_, summary, self.template_, self.max_words, self.token_budget)
            if self.rewrite:
                final = rewrite_summary(self.client_, final)
            out.append(final)
        return out
