"""Real-model engine: hosts the embedding and scorer models behind the
same interface the stub implements.

Model loading happens eagerly at construction; any failure raises
ModelLoadError with the underlying diagnostic, and the caller (serve /
create_app) refuses to start. Scoring returns the raw logits of the five
answer tokens "1".."5" at the first generated position; the prompt
received from the engine is passed to the model verbatim.
"""

from __future__ import annotations

import logging
from pathlib import Path

from .config import BackendConfig
from .errors import ModelLoadError, ServiceError

logger = logging.getLogger(__name__)

LEVEL_TOKENS = ("1", "2", "3", "4", "5")


class ModelEngine:
    def __init__(self, config: BackendConfig):
        self.config = config
        self.frame_root = Path(config.frame_root)
        try:
            import torch  # noqa: F401
            from transformers import AutoModel, AutoProcessor, AutoTokenizer
        except ImportError as exc:
            raise ModelLoadError(f"model runtime unavailable: {exc}") from exc
        try:
            self.embed_model = AutoModel.from_pretrained(config.embed_model_id)
            self.embed_processor = AutoProcessor.from_pretrained(config.embed_model_id)
            self.scorer_model = AutoModel.from_pretrained(config.scorer_model_id)
            self.scorer_tokenizer = AutoTokenizer.from_pretrained(config.scorer_model_id)
        except Exception as exc:
            raise ModelLoadError(
                f"cannot load models embed={config.embed_model_id!r} "
                f"scorer={config.scorer_model_id!r} on {config.device!r}: {exc}"
            ) from exc
        self.embed_model.to(config.device).eval()
        self.scorer_model.to(config.device).eval()
        self._level_token_ids = self._resolve_level_token_ids()
        self.dim = int(self.embed_model.config.hidden_size)

    def _resolve_level_token_ids(self) -> list[int]:
        """Single-token ids for the answers "1".."5".

        Tokenizers that split digits differently need per-family handling;
        only single-token digit vocabularies are supported here.
        """
        ids = []
        for token in LEVEL_TOKENS:
            encoded = self.scorer_tokenizer.encode(token, add_special_tokens=False)
            if len(encoded) != 1:
                raise ModelLoadError(
                    f"tokenizer splits level token {token!r} into {len(encoded)} pieces; "
                    "this model family is not supported for level scoring"
                )
            ids.append(encoded[0])
        return ids

    def _frame_path(self, video_id: str, frame_index: int) -> Path:
        path = self.frame_root / video_id / f"{frame_index:06d}.jpg"
        if not path.is_file():
            raise ServiceError(f"no frame image at {path}")
        return path

    def embed_frames(self, video_id: str, frame_indices: list[int]) -> list[list[float]]:
        raise ServiceError("real-model frame embedding is not implemented in this build")

    def embed_clip(self, video_id: str, frame_indices: list[int]) -> list[list[float]]:
        raise ServiceError("real-model clip embedding is not implemented in this build")

    def embed_query(self, query: str) -> list[list[float]]:
        raise ServiceError("real-model query embedding is not implemented in this build")

    def score(self, query: str, video_id: str, frame_indices: list[int],
              prompt: str | None = None) -> list[list[float]]:
        raise ServiceError("real-model scoring is not implemented in this build")
