"""
Local token-scoring backend with hard constrained decoding.

Any object satisfying ``TokenScorer`` can drive generation. At each step
the scores of tokens that would break the vocabulary bank (see
``BankPrefixAutomaton``) are set to negative infinity before sampling, so
every finished answer passes ``violation_report``.

``HuggingFaceTokenScorer`` wraps a causal LM from transformers. torch and
transformers are optional and imported lazily.
"""

from __future__ import annotations

import logging
import time
from typing import Optional, Protocol, Sequence, runtime_checkable

import numpy as np

from apps.runner.adapters.base import Backend
from packages.core.errors import ConstraintExhaustedError
from packages.core.models import BackendReply, BackendRequest, FinishReason, TokenUsage
from packages.core.vocab.prefix import BankPrefixAutomaton

logger = logging.getLogger(__name__)


@runtime_checkable
class TokenScorer(Protocol):
    """Tokenizer plus next-token scores."""

    eos_id: int

    @property
    def pieces(self) -> Sequence[str]:
        """Surface text of every token id, index = id."""
        ...

    def encode(self, text: str) -> list[int]:
        ...

    def step_scores(self, prompt_ids: Sequence[int], generated_ids: Sequence[int]) -> Sequence[float]:
        """Scores over the whole vocabulary for the next position."""
        ...


def allowed_token_mask(
    automaton: BankPrefixAutomaton,
    chunk: str,
    pieces: Sequence[str],
    eos_id: int,
) -> np.ndarray:
    """
    Boolean mask over token ids for the open ``chunk``.

    EOS is allowed only when the chunk is complete. Empty pieces are never
    allowed.
    """
    mask = np.zeros(len(pieces), dtype=bool)
    for token_id, piece in enumerate(pieces):
        if token_id == eos_id:
            mask[token_id] = automaton.is_complete(chunk)
        elif piece:
            mask[token_id] = automaton.extend(chunk, piece) is not None
    return mask


def _sample(scores: np.ndarray, temperature: float, top_p: float, rng: np.random.Generator) -> int:
    finite = np.isfinite(scores)
    if temperature <= 0.0:
        return int(np.argmax(scores))

    logits = np.where(finite, scores / temperature, -np.inf)
    logits = logits - np.max(logits[finite])
    probs = np.where(finite, np.exp(logits), 0.0)
    probs = probs / probs.sum()

    if top_p < 1.0:
        order = np.lexsort((np.arange(len(probs)), -probs))
        cumulative = np.cumsum(probs[order])
        keep = int(np.searchsorted(cumulative, top_p, side="left")) + 1
        kept = order[:keep]
        nucleus = np.zeros_like(probs)
        nucleus[kept] = probs[kept]
        probs = nucleus / nucleus.sum()

    return int(rng.choice(len(probs), p=probs))


class LocalScoringBackend(Backend):
    """Decodes locally from a ``TokenScorer``; supports token masking."""

    name = "local"

    def __init__(self, scorer: TokenScorer):
        super().__init__()
        self.scorer = scorer
        self._pieces = list(scorer.pieces)

    @property
    def supports_token_scoring(self) -> bool:
        return True

    def _prompt_text(self, request: BackendRequest) -> str:
        if request.system_text:
            return f"{request.system_text}\n{request.user_text}"
        return request.user_text

    def _seed(self, request: BackendRequest) -> int:
        # Same seed with or without a constraint, so a no-op mask changes nothing.
        unconstrained = request.model_copy(update={"constraint": None})
        return int(unconstrained.digest[:16], 16)

    def generate(self, request: BackendRequest) -> BackendReply:
        self._account(request)
        return self._decode(request, automaton=None)

    def generate_constrained(self, request: BackendRequest) -> BackendReply:
        """
        Decode with every out-of-bank continuation masked.

        Raises ``ConstraintExhaustedError`` when nothing but EOS is allowed at
        the first step.
        """
        if request.constraint is None:
            raise ValueError("generate_constrained needs a request with a constraint bank")
        self._account(request)
        return self._decode(request, automaton=BankPrefixAutomaton(request.constraint))

    def _decode(self, request: BackendRequest, automaton: Optional[BankPrefixAutomaton]) -> BackendReply:
        started = time.monotonic()
        params = request.params
        rng = np.random.default_rng(self._seed(request))
        prompt_ids = self.scorer.encode(self._prompt_text(request))
        eos_id = self.scorer.eos_id

        generated: list[int] = []
        text = ""
        chunk = ""
        mask_cache: dict[str, np.ndarray] = {}
        finish = FinishReason.LENGTH

        for step in range(params.max_new_tokens):
            scores = np.array(self.scorer.step_scores(prompt_ids, generated), dtype=float)

            if automaton is not None:
                mask = mask_cache.get(chunk)
                if mask is None:
                    mask = allowed_token_mask(automaton, chunk, self._pieces, eos_id)
                    mask_cache[chunk] = mask
                if step == 0:
                    non_eos = mask.copy()
                    non_eos[eos_id] = False
                    if not non_eos.any():
                        raise ConstraintExhaustedError(
                            f"no token is allowed by bank {request.constraint.digest} at the first step"
                        )
                scores = np.where(mask, scores, -np.inf)
                if not np.isfinite(scores).any():
                    break

            token_id = _sample(scores, params.temperature, params.top_k_or_p, rng)
            if token_id == eos_id:
                finish = FinishReason.STOP
                break

            piece = self._pieces[token_id]
            generated.append(token_id)
            text += piece
            if automaton is not None:
                chunk = automaton.extend(chunk, piece) or ""

            hit = next((s for s in params.stop_sequences if s and s in text), None)
            if hit is not None:
                text = text[: text.index(hit)]
                finish = FinishReason.STOP
                break

        if automaton is not None:
            text = automaton.truncate_incomplete(text)

        return BackendReply(
            text=text.strip(),
            finish_reason=finish,
            usage=TokenUsage(prompt_tokens=len(prompt_ids), completion_tokens=len(generated)),
            latency_seconds=time.monotonic() - started,
        )


class HuggingFaceTokenScorer:
    """
    ``TokenScorer`` over a transformers causal LM.

    Requires the optional ``torch`` and ``transformers`` packages.
    """

    _MARKERS = {"Ġ": " ", "▁": " ", "Ċ": "\n"}

    def __init__(self, model_name: str, device: Optional[str] = None):
        try:
            import torch
            from transformers import AutoModelForCausalLM, AutoTokenizer
        except ImportError as e:
            raise ImportError(
                "The local backend needs torch and transformers: pip install torch transformers"
            ) from e

        self._torch = torch
        self.device = device or ("cuda" if torch.cuda.is_available() else "cpu")
        self.tokenizer = AutoTokenizer.from_pretrained(model_name)
        self.model = AutoModelForCausalLM.from_pretrained(model_name).to(self.device)
        self.model.eval()
        self.eos_id = int(self.tokenizer.eos_token_id)
        self._pieces = [self._surface(tok) for tok in self.tokenizer.convert_ids_to_tokens(range(len(self.tokenizer)))]
        logger.info(f"Loaded {model_name} on {self.device} ({len(self._pieces)} tokens)")

    def _surface(self, token: Optional[str]) -> str:
        if token is None:
            return ""
        if token in self.tokenizer.all_special_tokens:
            return ""
        for marker, replacement in self._MARKERS.items():
            token = token.replace(marker, replacement)
        return token

    @property
    def pieces(self) -> Sequence[str]:
        return self._pieces

    def encode(self, text: str) -> list[int]:
        if getattr(self.tokenizer, "chat_template", None):
            return list(
                self.tokenizer.apply_chat_template(
                    [{"role": "user", "content": text}], add_generation_prompt=True, tokenize=True
                )
            )
        return list(self.tokenizer.encode(text))

    def step_scores(self, prompt_ids: Sequence[int], generated_ids: Sequence[int]) -> Sequence[float]:
        torch = self._torch
        ids = torch.tensor([list(prompt_ids) + list(generated_ids)], device=self.device)
        with torch.no_grad():
            logits = self.model(ids).logits[0, -1]
        # Some checkpoints pad the output layer past the tokenizer size.
        return logits[: len(self._pieces)].float().cpu().numpy()
