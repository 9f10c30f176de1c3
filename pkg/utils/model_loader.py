"""
Encoder construction and the checkpoint container.

Checkpoint layout (all integers little-endian):

    8 bytes   magic  b"RELCPCK\\0"
    4 bytes   uint32 format version (1)
    8 bytes   uint64 header length in bytes
    header    UTF-8 JSON: {"version", "encoder", "vocab_fingerprint", "meta",
              "arrays": [{"name", "shape", "offset"}, ...]}
    data      every array as contiguous float64, offsets relative to the data start

The header is written with sorted keys and arrays in state-dict order, so the
same parameters always produce the same bytes.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Union

import numpy as np
import torch
from torch import nn

from logger.custom_logger import CustomLogger
from exception.custom_exception import ConfigError, RelationCPException
from model.models import EncoderConfig, EncoderKind
from src.encoder.cnn import CNNEncoder, init_cnn_params
from src.encoder.transformer import TransformerEncoder, dtype_of, init_params

CHECKPOINT_MAGIC = b"RELCPCK\0"
CHECKPOINT_VERSION = 1
_PREAMBLE = struct.Struct("<8sIQ")

Encoder = Union[TransformerEncoder, CNNEncoder]


class ModelLoader:
    def __init__(self) -> None:
        self.log = CustomLogger().get_logger(__name__)

    def build_encoder(self, cfg: EncoderConfig, seed: int) -> Encoder:
        """Freshly initialized encoder of ``cfg.kind``."""
        if cfg.kind == EncoderKind.CNN:
            model = init_cnn_params(cfg, seed)
        else:
            model = init_params(cfg, seed)
        self.log.info("Encoder initialized", kind=cfg.kind.value, seed=seed,
                      parameters=sum(p.numel() for p in model.parameters()))
        return model

    # ----------------------------- #
    # Container                     #
    # ----------------------------- #
    def save(
        self,
        path: str | Path,
        state: Union[nn.Module, Mapping[str, torch.Tensor]],
        encoder_cfg: EncoderConfig,
        vocab_fingerprint: str,
        meta: Optional[Dict[str, Any]] = None,
    ) -> Path:
        out = Path(path)
        arrays = state.state_dict() if isinstance(state, nn.Module) else dict(state)
        directory, chunks, offset = [], [], 0
        for name, tensor in arrays.items():
            data = np.ascontiguousarray(tensor.detach().cpu().to(torch.float64).numpy(), dtype="<f8")
            directory.append({"name": name, "shape": list(data.shape), "offset": offset})
            chunks.append(data.tobytes())
            offset += data.nbytes
        header = json.dumps(
            {
                "version": CHECKPOINT_VERSION,
                "encoder": encoder_cfg.model_dump(mode="json"),
                "vocab_fingerprint": vocab_fingerprint,
                "meta": meta or {},
                "arrays": directory,
            },
            sort_keys=True,
            separators=(",", ":"),
        ).encode("utf-8")
        try:
            out.parent.mkdir(parents=True, exist_ok=True)
            with open(out, "wb") as f:
                f.write(_PREAMBLE.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, len(header)))
                f.write(header)
                for chunk in chunks:
                    f.write(chunk)
        except OSError as e:
            self.log.error("Failed to write checkpoint", path=str(out), error=str(e))
            raise RelationCPException(f"Failed to write checkpoint {out}", e) from e
        self.log.info("Checkpoint saved", path=str(out), arrays=len(directory), bytes=offset)
        return out

    def read(self, path: str | Path) -> Tuple[Dict[str, Any], Dict[str, torch.Tensor]]:
        """Header dict and float64 tensors by name."""
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"checkpoint not found: {p}")
        blob = p.read_bytes()
        if len(blob) < _PREAMBLE.size:
            raise ConfigError(f"checkpoint {p} is truncated")
        magic, version, header_len = _PREAMBLE.unpack_from(blob)
        if magic != CHECKPOINT_MAGIC:
            raise ConfigError(f"{p} is not a checkpoint (bad magic)")
        if version != CHECKPOINT_VERSION:
            raise ConfigError(f"checkpoint {p} has unsupported format version {version}")
        start = _PREAMBLE.size + header_len
        header = json.loads(blob[_PREAMBLE.size:start].decode("utf-8"))
        tensors: Dict[str, torch.Tensor] = {}
        for entry in header["arrays"]:
            count = int(np.prod(entry["shape"], dtype=np.int64))
            data = np.frombuffer(blob, dtype="<f8", count=count, offset=start + entry["offset"])
            tensors[entry["name"]] = torch.from_numpy(data.reshape(entry["shape"]).copy())
        return header, tensors

    def check_vocab(self, header: Dict[str, Any], vocab_fingerprint: Optional[str], path: str | Path) -> None:
        if vocab_fingerprint is not None and header["vocab_fingerprint"] != vocab_fingerprint:
            raise ConfigError(
                f"checkpoint {path} was trained with a different vocabulary "
                f"({header['vocab_fingerprint'][:12]} != {vocab_fingerprint[:12]})"
            )

    def load_encoder(self, path: str | Path, vocab_fingerprint: Optional[str] = None) -> Tuple[Encoder, Dict[str, Any]]:
        """Rebuild the encoder stored in ``path``; returns it with the checkpoint metadata."""
        header, tensors = self.read(path)
        self.check_vocab(header, vocab_fingerprint, path)
        cfg = EncoderConfig.model_validate(header["encoder"])
        model = (CNNEncoder(cfg) if cfg.kind == EncoderKind.CNN else TransformerEncoder(cfg)).to(dtype_of(cfg))
        prefix = header["meta"].get("encoder_prefix", "")
        state = {name[len(prefix):]: t for name, t in tensors.items() if name.startswith(prefix)}
        try:
            model.load_state_dict({k: v.to(dtype_of(cfg)) for k, v in state.items()})
        except RuntimeError as e:
            raise ConfigError(f"checkpoint {path} does not match its encoder config", e) from e
        self.log.info("Checkpoint loaded", path=str(path), kind=cfg.kind.value)
        return model.eval(), header["meta"]
