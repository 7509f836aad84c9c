"""JSON-over-HTTP chat-completion judges, validity oracle, and score client.

The transport retries with exponential backoff and raises JudgeUnavailable
only after the retry budget is spent; judge wrappers convert that into an
abstaining vote so one flaky call never kills a tournament. Responses are
cached in an append-only JSONL file keyed by hash(prompt, model,
temperature, sample-index).
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import requests

from .domain import JudgeSource, Question, Solution, Validity, ValidityLabel
from .errors import JudgeUnavailable, VerdictUnparsable
from .judges import JudgeRequest, PositionalVote, ScoreDistribution, Winner, parse_verdict

logger = logging.getLogger(__name__)

DEFAULT_AUTH_ENV = "JUDGE_API_TOKEN"

PAIRWISE_INSTRUCTION = (
    "You compare two candidate explanations for the same question and answer. "
    "Pick the one that is better grounded in the given facts and whose "
    "reasoning steps follow from each other without gaps. Respond with a brief "
    "justification, then a line of the form 'Preferred Explanation: 1' or "
    "'Preferred Explanation: 2', where 1 means the first explanation shown "
    "and 2 means the second."
)

VALIDITY_INSTRUCTION = (
    "You check a single explanation for a question against the provided "
    "evidence. Output True only when every claim is supported by the evidence "
    "and each reasoning step follows from the previous ones; output False "
    "otherwise, and also when in doubt. The final line of your output must be "
    "exactly True or False."
)

GEVAL_INSTRUCTION = (
    "Rate how factually grounded and logically coherent the explanation below "
    "is for the given question and answer, on a scale from 1 (worst) to 5 "
    "(best). Respond with the single digit only."
)


@dataclass(frozen=True, slots=True)
class RemoteConfig:
    endpoint: str
    model: str
    temperature: float = 0.7
    max_tokens: int = 512
    logprobs: bool = False
    auth_env: str = DEFAULT_AUTH_ENV
    timeout: float = 30.0
    max_retries: int = 3
    backoff_base: float = 0.5
    max_in_flight: int = 4
    cache_path: str | None = None


class JudgeCallCache:
    """Append-only response cache; safe for concurrent judges."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._entries: dict[str, dict] = {}
        if self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    row = json.loads(line)
                    self._entries[row["key"]] = row["response"]

    @staticmethod
    def key(prompt: str, model: str, temperature: float, sample_index: str) -> str:
        payload = "\x1f".join([prompt, model, repr(temperature), sample_index])
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def get(self, key: str) -> dict | None:
        with self._lock:
            return self._entries.get(key)

    def put(self, key: str, response: dict) -> None:
        with self._lock:
            if key in self._entries:
                return
            self._entries[key] = response
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps({"key": key, "response": response}, ensure_ascii=False))
                fh.write("\n")

    def stats(self) -> dict:
        with self._lock:
            size = self.path.stat().st_size if self.path.exists() else 0
            return {"entries": len(self._entries), "path": str(self.path), "bytes": size}

    def purge(self) -> int:
        with self._lock:
            n = len(self._entries)
            self._entries.clear()
            if self.path.exists():
                self.path.unlink()
            return n


class ChatCompletionClient:
    """Minimal chat-completion POST client with retries and bounded fan-out."""

    def __init__(self, config: RemoteConfig, session: requests.Session | None = None):
        self.config = config
        self.session = session or requests.Session()
        self._semaphore = threading.BoundedSemaphore(config.max_in_flight)
        self.cache = JudgeCallCache(config.cache_path) if config.cache_path else None

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.config.auth_env, "")
        if token:
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def complete(
        self,
        messages: Sequence[Mapping[str, str]],
        sample_index: str,
        temperature: float | None = None,
        use_cache: bool = True,
    ) -> dict:
        """POST the chat request; returns the raw response object.

        Raises JudgeUnavailable after max_retries transport failures.
        """
        cfg = self.config
        temperature = cfg.temperature if temperature is None else temperature
        prompt_key = json.dumps(list(messages), sort_keys=True, ensure_ascii=False)
        cache_key = JudgeCallCache.key(prompt_key, cfg.model, temperature, sample_index)
        if use_cache and self.cache is not None:
            hit = self.cache.get(cache_key)
            if hit is not None:
                return hit
        body = {
            "model": cfg.model,
            "messages": list(messages),
            "temperature": temperature,
            "max_tokens": cfg.max_tokens,
            "logprobs": cfg.logprobs,
        }
        last_error: Exception | None = None
        for attempt in range(cfg.max_retries):
            if attempt:
                time.sleep(cfg.backoff_base * 2 ** (attempt - 1))
            try:
                with self._semaphore:
                    resp = self.session.post(
                        cfg.endpoint,
                        json=body,
                        headers=self._headers(),
                        timeout=cfg.timeout,
                    )
                if resp.status_code // 100 == 2:
                    payload = resp.json()
                    if use_cache and self.cache is not None:
                        self.cache.put(cache_key, payload)
                    return payload
                last_error = JudgeUnavailable(
                    f"HTTP {resp.status_code} from {cfg.endpoint}"
                )
                logger.warning("judge call attempt %d failed: %s", attempt + 1, last_error)
            except requests.RequestException as exc:
                last_error = exc
                logger.warning("judge call attempt %d failed: %s", attempt + 1, exc)
        raise JudgeUnavailable(
            f"judge endpoint failed after {cfg.max_retries} attempts: {last_error}"
        )


def response_text(payload: dict) -> str:
    """Pull the completion text out of an OpenAI-style response object."""
    try:
        choice = payload["choices"][0]
    except (KeyError, IndexError, TypeError) as exc:
        raise VerdictUnparsable(f"response has no choices: {payload!r}") from exc
    message = choice.get("message") or {}
    text = message.get("content") or choice.get("text")
    if not isinstance(text, str) or not text:
        raise VerdictUnparsable("response carries no text content")
    return text


def _fewshot_lines(fewshot: Sequence[Mapping[str, str]]) -> list[str]:
    lines = []
    for ex in fewshot:
        lines.extend(
            [
                f"Question: {ex['question']}",
                f"Answer: {ex['answer']}",
                f"Explanation 1: {ex['explanation1']}",
                f"Explanation 2: {ex['explanation2']}",
                f"Justification: {ex.get('justification', '')}",
                f"Preferred Explanation: {ex['preferred']}",
                "",
            ]
        )
    return lines


def build_pairwise_messages(
    request: JudgeRequest, fewshot: Sequence[Mapping[str, str]] = ()
) -> list[dict]:
    q = request.question
    lines = _fewshot_lines(fewshot)
    if q.passage:
        lines.append(f"Passage: {q.passage}")
    if q.options:
        rendered = " ".join(f"{letter}. {text}" for letter, text in q.options)
        lines.append(f"Options: {rendered}")
    lines.extend(
        [
            f"Question: {q.text}",
            f"Answer: {request.gold_answer}",
            f"Explanation 1: {request.first.rationale}",
            f"Explanation 2: {request.second.rationale}",
            "Justification:",
        ]
    )
    return [
        {"role": "system", "content": PAIRWISE_INSTRUCTION},
        {"role": "user", "content": "\n".join(lines)},
    ]


def load_fewshot(path: str | Path) -> list[dict]:
    """Few-shot exemplars from a user-supplied JSON or JSONL file."""
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        text = fh.read().strip()
    if text.startswith("["):
        return json.loads(text)
    return [json.loads(line) for line in text.splitlines() if line.strip()]


@dataclass
class RemoteJudge:
    """Pairwise judge backed by a chat-completion endpoint.

    Transport failure after retries becomes an abstain vote flagged
    ``transport_failed``; unparsable output becomes a plain abstain.
    """

    client: ChatCompletionClient
    fewshot: Sequence[Mapping[str, str]] = ()
    name: str = "remote"

    def vote(self, request: JudgeRequest) -> PositionalVote:
        messages = build_pairwise_messages(request, self.fewshot)
        try:
            payload = self.client.complete(messages, sample_index=request.context)
            text = response_text(payload)
        except JudgeUnavailable as exc:
            return PositionalVote(0, justification=str(exc), raw=None, transport_failed=True)
        except VerdictUnparsable:
            return PositionalVote(0, raw=None)
        winner = parse_verdict(text)
        position = {Winner.FIRST: 1, Winner.SECOND: 2, Winner.ABSTAIN: 0}[winner]
        return PositionalVote(position, raw=text)


_TRUE_FALSE = re.compile(r"\b(true|false)\b", re.IGNORECASE)


@dataclass
class RemoteValidityOracle:
    """Validity oracle backed by the same endpoint (True/False protocol)."""

    client: ChatCompletionClient
    eval_cap: int = 20
    temperature: float = 0.0
    kind: str = "remote"

    def judge(self, question: Question, solution: Solution) -> ValidityLabel:
        evidence = list(question.supporting_facts)
        if question.passage:
            evidence.append(question.passage)
        lines = [f"Question: {question.text}"]
        if evidence:
            lines.append("Evidence: " + " ".join(evidence))
        lines.extend(
            [f"Answer: {question.gold_answer}", f"Explanation: {solution.rationale}"]
        )
        messages = [
            {"role": "system", "content": VALIDITY_INSTRUCTION},
            {"role": "user", "content": "\n".join(lines)},
        ]
        try:
            payload = self.client.complete(
                messages, sample_index=f"validity/{solution.id}", temperature=self.temperature
            )
            text = response_text(payload)
        except (JudgeUnavailable, VerdictUnparsable) as exc:
            logger.warning("validity oracle failed on %s: %s", solution.id, exc)
            return ValidityLabel(Validity.UNKNOWN, JudgeSource.REMOTE_JUDGE)
        last = None
        for last in _TRUE_FALSE.finditer(text):
            pass
        if last is None:
            return ValidityLabel(Validity.UNKNOWN, JudgeSource.REMOTE_JUDGE)
        value = Validity.VALID if last.group(1).lower() == "true" else Validity.INVALID
        return ValidityLabel(value, JudgeSource.REMOTE_JUDGE)


_SCORE_DIGIT = re.compile(r"\b([1-5])\b")


def _distribution_from_logprobs(payload: dict) -> ScoreDistribution | None:
    """Renormalized probabilities over the score tokens "1".."5" when the
    endpoint reports per-token alternatives; None when it does not."""
    import math as _math

    try:
        content = payload["choices"][0]["logprobs"]["content"]
    except (KeyError, IndexError, TypeError):
        return None
    for token_info in content or ():
        token = str(token_info.get("token", "")).strip()
        if token in {"1", "2", "3", "4", "5"}:
            probs = [0.0] * 5
            for alt in token_info.get("top_logprobs", ()):
                alt_token = str(alt.get("token", "")).strip()
                if alt_token in {"1", "2", "3", "4", "5"}:
                    probs[int(alt_token) - 1] = _math.exp(float(alt["logprob"]))
            total = sum(probs)
            if total <= 0.0:
                return None
            return ScoreDistribution(tuple(p / total for p in probs))
    return None


@dataclass
class RemoteGEvalScorer:
    """Weighted-score scorer for one question's candidates.

    Uses the judge's reported per-token probabilities when the endpoint
    exposes them; otherwise each sampled output contributes a point-mass
    distribution and the caller's S-sample averaging approximates the
    distribution empirically.
    """

    client: ChatCompletionClient
    question: Question

    def __call__(self, solution: Solution, attempt: int) -> ScoreDistribution:
        lines = [
            f"Question: {self.question.text}",
            f"Answer: {self.question.gold_answer}",
            f"Explanation: {solution.rationale}",
            "Score:",
        ]
        messages = [
            {"role": "system", "content": GEVAL_INSTRUCTION},
            {"role": "user", "content": "\n".join(lines)},
        ]
        payload = self.client.complete(
            messages, sample_index=f"geval/{solution.id}/{attempt}"
        )
        dist = _distribution_from_logprobs(payload)
        if dist is not None:
            return dist
        text = response_text(payload)
        m = _SCORE_DIGIT.search(text)
        if m is None:
            raise VerdictUnparsable(f"no score digit in {text!r}")
        probs = [0.0] * 5
        probs[int(m.group(1)) - 1] = 1.0
        return ScoreDistribution(tuple(probs))
