"""Checkpoint files: text header, then raw little-endian float32 blocks.

Layout, in order:

    GAPREC-CKPT v1\n
    kind=<model kind>\n
    <ModelConfig as key=value lines>\n
    tensors=<count>\n
    repeated: <name> <d0,d1,...>\n followed by the raw '<f4' bytes
    end\n

Loading rebuilds the model from the header config and overwrites its
parameters, so a round trip reproduces every bit.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import CheckpointError
from .models import MODEL_KINDS, ModelConfig, build_model

MAGIC = "GAPREC-CKPT"
VERSION = 1

_CONFIG_KEYS = ("vocab_size", "session_len", "embed_dim", "proj_dim",
                "kernel_width", "encoder_dilations", "decoder_dilations",
                "gap_fraction", "use_projector")


def _config_lines(config: ModelConfig) -> list[str]:
    return [
        f"vocab_size={config.vocab_size}",
        f"session_len={config.session_len}",
        f"embed_dim={config.embed_dim}",
        f"proj_dim={config.proj_dim}",
        f"kernel_width={config.kernel_width}",
        "encoder_dilations=" + ",".join(map(str, config.encoder_dilations)),
        "decoder_dilations=" + ",".join(map(str, config.decoder_dilations)),
        f"gap_fraction={config.gap_fraction!r}",
        f"use_projector={int(config.use_projector)}",
    ]


def save_checkpoint(path, model) -> None:
    """Write kind, config, and every named parameter in registry order."""
    for name, p in model.params.items():
        if p.data.dtype != np.float32:
            raise CheckpointError(f"checkpoints store float32 only; parameter "
                                  f"'{name}' has dtype {p.data.dtype}")
    with open(path, "wb") as fh:
        fh.write(f"{MAGIC} v{VERSION}\n".encode())
        fh.write(f"kind={model.kind}\n".encode())
        for line in _config_lines(model.config):
            fh.write((line + "\n").encode())
        fh.write(f"tensors={len(model.params)}\n".encode())
        for name, p in model.params.items():
            shape = ",".join(map(str, p.data.shape))
            fh.write(f"{name} {shape}\n".encode())
            fh.write(np.ascontiguousarray(p.data, dtype="<f4").tobytes())
        fh.write(b"end\n")


def _read_line(fh, path) -> str:
    raw = fh.readline()
    if not raw.endswith(b"\n"):
        raise CheckpointError(f"{path}: truncated checkpoint (unexpected end "
                              f"of file)")
    return raw[:-1].decode()


def load_checkpoint(path, expected_kind: str | None = None):
    """Rebuild the saved model; every shape is checked against its config."""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint file not found: {path}")
    with open(path, "rb") as fh:
        header = _read_line(fh, path)
        if header != f"{MAGIC} v{VERSION}":
            if not header.startswith(MAGIC):
                raise CheckpointError(f"{path}: not a checkpoint file "
                                      f"(bad magic '{header[:20]}')")
            raise CheckpointError(f"{path}: unsupported checkpoint version "
                                  f"'{header}', expected v{VERSION}")
        kind_line = _read_line(fh, path)
        if not kind_line.startswith("kind="):
            raise CheckpointError(f"{path}: expected 'kind=' line, got "
                                  f"'{kind_line}'")
        kind = kind_line[5:]
        if kind not in MODEL_KINDS:
            raise CheckpointError(f"{path}: unknown model kind '{kind}'")
        if expected_kind is not None and kind != expected_kind:
            raise CheckpointError(f"{path}: checkpoint holds a '{kind}' model, "
                                  f"expected '{expected_kind}'")
        raw: dict[str, str] = {}
        for key in _CONFIG_KEYS:
            line = _read_line(fh, path)
            if "=" not in line or line.split("=", 1)[0] != key:
                raise CheckpointError(f"{path}: expected config key '{key}', "
                                      f"got '{line}'")
            raw[key] = line.split("=", 1)[1]
        try:
            config = ModelConfig(
                vocab_size=int(raw["vocab_size"]),
                session_len=int(raw["session_len"]),
                embed_dim=int(raw["embed_dim"]),
                proj_dim=int(raw["proj_dim"]),
                kernel_width=int(raw["kernel_width"]),
                encoder_dilations=tuple(
                    int(v) for v in raw["encoder_dilations"].split(",")),
                decoder_dilations=tuple(
                    int(v) for v in raw["decoder_dilations"].split(",")),
                gap_fraction=float(raw["gap_fraction"]),
                use_projector=bool(int(raw["use_projector"])),
            )
        except ValueError as exc:
            raise CheckpointError(f"{path}: malformed config value: {exc}")
        count_line = _read_line(fh, path)
        if not count_line.startswith("tensors="):
            raise CheckpointError(f"{path}: expected 'tensors=' line, got "
                                  f"'{count_line}'")
        try:
            n_tensors = int(count_line[8:])
        except ValueError:
            raise CheckpointError(f"{path}: malformed tensor count "
                                  f"'{count_line}'")
        loaded: dict[str, np.ndarray] = {}
        for _ in range(n_tensors):
            head = _read_line(fh, path)
            try:
                name, shape_text = head.rsplit(" ", 1)
                shape = tuple(int(v) for v in shape_text.split(","))
            except ValueError:
                raise CheckpointError(f"{path}: malformed tensor header "
                                      f"'{head}'")
            n_bytes = 4 * int(np.prod(shape))
            payload = fh.read(n_bytes)
            if len(payload) != n_bytes:
                raise CheckpointError(f"{path}: truncated checkpoint while "
                                      f"reading tensor '{name}'")
            loaded[name] = np.frombuffer(payload, dtype="<f4").reshape(shape) \
                .astype(np.float32)
        tail = fh.readline()
        if tail != b"end\n":
            raise CheckpointError(f"{path}: missing end marker (file corrupt "
                                  f"or truncated)")

    model = build_model(kind, config, np.random.default_rng(0))
    expected = set(model.params)
    if set(loaded) != expected:
        missing = expected - set(loaded)
        extra = set(loaded) - expected
        raise CheckpointError(f"{path}: parameter names do not match config "
                              f"(missing {sorted(missing)}, "
                              f"unexpected {sorted(extra)})")
    for name, p in model.params.items():
        if loaded[name].shape != p.data.shape:
            raise CheckpointError(f"{path}: tensor '{name}' has shape "
                                  f"{loaded[name].shape}, config implies "
                                  f"{p.data.shape}")
        p.data = loaded[name]
    return model
