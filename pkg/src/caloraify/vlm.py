"""Two-stage analysis pipeline: a byte-exact prompt template, a pluggable
vision-language backend (deterministic stub or HTTP), and chat sessions that
answer follow-ups from the stored report.

With the stub backend the whole pipeline is a pure function of the image
bytes, the fixture table, the KB, and the config.
"""

from __future__ import annotations

import base64
import enum
import hashlib
import json
import time
from dataclasses import dataclass, field

import requests

from .calories import CalorieReport, EstimateConfig, estimate, round_half_up
from .ingredients import ParsedIngredient, parse_block
from .kb import KnowledgeBase
from .retrieval import VectorIndex

PROMPT_TEMPLATE = "[INST]<Img><ImageHere></Img>[{task}] {instruction} [/INST]"
DEFAULT_STAGE1_QUESTION = "What ingredients and quantities are required for this recipe?"
NO_INGREDIENTS_MESSAGE = "Could not identify ingredients from the image."
NO_ANALYSIS_MESSAGE = "No analysis available yet. Upload a food image first."

DEFAULT_MAX_TOKENS = 512


class PromptError(ValueError):
    """Raised for prompts that cannot be built (empty instruction)."""


class TransportError(RuntimeError):
    """Backend could not be reached or answered with a non-success status."""

    def __init__(self, message: str, retries: int):
        super().__init__(f"{message} (after {retries} retries)")
        self.retries = retries


class SessionError(ValueError):
    """Chat turn ordering violated the user/assistant alternation."""


class TaskIdentifier(enum.Enum):
    VQA = "vqa"
    GROUNDING = "grounding"


@dataclass(frozen=True)
class ImageRef:
    data: bytes
    media_type: str

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.data).hexdigest()


@dataclass(frozen=True)
class PromptEnvelope:
    text: str
    image: ImageRef


def build_prompt(task: TaskIdentifier, instruction: str) -> str:
    """Render the exact backend prompt; single spaces, no trailing whitespace."""
    cleaned = instruction.strip()
    if not cleaned:
        raise PromptError("instruction is empty")
    return PROMPT_TEMPLATE.format(task=task.value, instruction=cleaned)


class StubBackend:
    """Deterministic stand-in for the model: responses keyed by image digest."""

    forwards_followups = False

    def __init__(self, fixtures: dict[str, str] | None = None, default_response: str = ""):
        self.fixtures = dict(fixtures or {})
        self.default_response = default_response

    @classmethod
    def from_file(cls, path: str, default_response: str = "") -> "StubBackend":
        """Load a line-delimited JSON fixture file of {"digest", "response"} rows."""
        fixtures: dict[str, str] = {}
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                row = json.loads(line)
                fixtures[row["digest"]] = row["response"]
        return cls(fixtures=fixtures, default_response=default_response)

    def generate(self, prompt: str, image: ImageRef, max_tokens: int = DEFAULT_MAX_TOKENS) -> str:
        return self.fixtures.get(image.digest, self.default_response)


class HttpBackend:
    """HTTP model backend.

    Wire contract: POST {"prompt", "image_b64", "media_type", "max_tokens"}
    -> {"text"}. Retries transport failures before raising TransportError.
    """

    forwards_followups = True

    def __init__(self, endpoint: str, timeout_ms: int = 30_000, retries: int = 2):
        self.endpoint = endpoint
        self.timeout_ms = timeout_ms
        self.retries = retries

    def generate(self, prompt: str, image: ImageRef, max_tokens: int = DEFAULT_MAX_TOKENS) -> str:
        payload = {
            "prompt": prompt,
            "image_b64": base64.b64encode(image.data).decode("ascii"),
            "media_type": image.media_type,
            "max_tokens": max_tokens,
        }
        last_error: Exception | None = None
        for _ in range(self.retries + 1):
            try:
                response = requests.post(
                    self.endpoint, json=payload, timeout=self.timeout_ms / 1000.0
                )
                response.raise_for_status()
                return response.json()["text"]
            except (requests.RequestException, KeyError, ValueError) as exc:
                last_error = exc
        raise TransportError(f"backend {self.endpoint} failed: {last_error}", self.retries)


def generate(backend, prompt: PromptEnvelope, max_tokens: int = DEFAULT_MAX_TOKENS) -> str:
    """Run one completion against whichever backend is configured."""
    return backend.generate(prompt.text, prompt.image, max_tokens)


@dataclass(frozen=True)
class PipelineConfig:
    stage1_question: str = DEFAULT_STAGE1_QUESTION
    retrieval_k: int = 3
    min_score: float = 0.35
    max_tokens: int = DEFAULT_MAX_TOKENS

    def estimate_config(self) -> EstimateConfig:
        return EstimateConfig(k=self.retrieval_k, min_score=self.min_score)


@dataclass(frozen=True)
class AnalysisResult:
    stage1_text: str
    parsed: tuple[ParsedIngredient, ...]
    report: CalorieReport
    final_answer: str


def _empty_report() -> CalorieReport:
    return CalorieReport(estimates=(), total_kcal=0.0, evidence=(), generated_answer="")


def analyze_image(
    image: ImageRef,
    backend,
    index: VectorIndex,
    kb: KnowledgeBase,
    config: PipelineConfig = PipelineConfig(),
) -> AnalysisResult:
    """Stage 1 asks the backend for ingredients; stage 2 grounds them in the KB.

    Malformed model text never raises; an answer with no parseable
    ingredients produces the fixed fallback message and an empty report.
    """
    prompt = PromptEnvelope(
        text=build_prompt(TaskIdentifier.VQA, config.stage1_question),
        image=image,
    )
    stage1_text = generate(backend, prompt, config.max_tokens)
    parsed, _errors = parse_block(stage1_text)
    if not parsed:
        return AnalysisResult(
            stage1_text=stage1_text,
            parsed=(),
            report=_empty_report(),
            final_answer=NO_INGREDIENTS_MESSAGE,
        )
    report = estimate(parsed, index, kb, config.estimate_config())
    return AnalysisResult(
        stage1_text=stage1_text,
        parsed=tuple(parsed),
        report=report,
        final_answer=report.generated_answer,
    )


@dataclass
class ChatTurn:
    role: str
    text: str
    image_digest: str | None = None


@dataclass
class ChatSession:
    """Append-only conversation; roles strictly alternate starting with user."""

    session_id: str
    turns: list[ChatTurn] = field(default_factory=list)
    created_at: float = field(default_factory=time.time)
    last_analysis: AnalysisResult | None = field(default=None, compare=False)

    def append(self, turn: ChatTurn) -> None:
        expected = "user" if len(self.turns) % 2 == 0 else "assistant"
        if turn.role != expected:
            raise SessionError(
                f"turn {len(self.turns) + 1} must be {expected!r}, got {turn.role!r}"
            )
        self.turns.append(turn)


def answer_followup(question: str, analysis: AnalysisResult) -> str:
    """Deterministic templated answer over the stored report."""
    lowered = question.lower()
    report = analysis.report
    named = [e for e in report.estimates if e.ingredient.name in lowered]
    if named:
        return "\n".join(
            f"{e.ingredient.name}: {round_half_up(e.kcal)} kcal" for e in named
        )
    if "evidence" in lowered or "source" in lowered:
        lines = []
        for est, context in zip(report.estimates, report.evidence):
            ids = ", ".join(hit.doc_id for hit in context.hits)
            lines.append(f"{est.ingredient.name}: {ids}")
        return "\n".join(lines) if lines else NO_INGREDIENTS_MESSAGE
    if "flag" in lowered or "assumption" in lowered:
        lines = []
        for est in report.estimates:
            flags = ", ".join(sorted(est.flags)) if est.flags else "no flags"
            lines.append(f"{est.ingredient.name}: {flags}")
        return "\n".join(lines) if lines else NO_INGREDIENTS_MESSAGE
    if "total" in lowered or "calorie" in lowered:
        return f"TOTAL: {round_half_up(report.total_kcal)} kcal"
    return analysis.final_answer


def _build_followup_instruction(question: str, analysis: AnalysisResult) -> str:
    """Follow-up instruction for live backends: retrieved evidence, then the question."""
    lines = ["Context:"]
    for context in analysis.report.evidence:
        for hit in context.hits:
            lines.append(f"- {hit.doc_id}: {hit.text}")
    lines.append(f"Question: {question}")
    return "\n".join(lines)


def chat_turn(
    session: ChatSession,
    user_text: str,
    image: ImageRef | None,
    backend,
    index: VectorIndex,
    kb: KnowledgeBase,
    config: PipelineConfig = PipelineConfig(),
) -> tuple[str, ChatSession]:
    """One conversational exchange; always appends exactly two turns.

    An image routes through the full analysis pipeline; plain text is answered
    from the latest stored analysis (or forwarded to a live backend with the
    retrieval context prepended). Nothing is recorded when the backend fails.
    """
    if len(session.turns) % 2 == 1:
        raise SessionError("previous user turn has no assistant reply yet")
    analysis: AnalysisResult | None = None
    if image is not None:
        analysis = analyze_image(image, backend, index, kb, config)
        assistant_text = analysis.final_answer
    elif session.last_analysis is None:
        assistant_text = NO_ANALYSIS_MESSAGE
    elif getattr(backend, "forwards_followups", False):
        instruction = _build_followup_instruction(user_text, session.last_analysis)
        prompt = PromptEnvelope(
            text=build_prompt(TaskIdentifier.VQA, instruction),
            image=ImageRef(data=b"", media_type="application/octet-stream"),
        )
        assistant_text = generate(backend, prompt, config.max_tokens)
    else:
        assistant_text = answer_followup(user_text, session.last_analysis)
    session.append(
        ChatTurn(role="user", text=user_text, image_digest=image.digest if image else None)
    )
    session.append(ChatTurn(role="assistant", text=assistant_text))
    if analysis is not None:
        session.last_analysis = analysis
    return assistant_text, session
