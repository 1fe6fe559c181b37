"""Checkpoints: a plain-text ``manifest.txt`` plus one CNSF tensor file per parameter."""

from __future__ import annotations

import os

import numpy as np

from .autodiff import Tensor
from .discriminator import DiscriminatorConfig, DiscriminatorParams
from .encoding import EncodingConfig
from .field import FieldConfig, GeneratorParams
from .hypernet import HypernetConfig
from .tensorio import read_tensor, write_tensor


class CheckpointError(ValueError):
    pass


def _ints(v) -> str:
    return ",".join(str(int(x)) for x in v)


def _to_ints(s: str) -> tuple[int, ...]:
    return tuple(int(x) for x in s.split(",") if x)


def _write_params(d, params: dict[str, Tensor]) -> list[str]:
    names = sorted(params)
    for name in names:
        write_tensor(os.path.join(d, f"{name}.cnsf"), params[name].data)
    return names


def _read_params(d, names: list[str]) -> dict[str, Tensor]:
    out = {}
    for name in names:
        path = os.path.join(d, f"{name}.cnsf")
        if not os.path.exists(path):
            raise CheckpointError(f"checkpoint {d} is missing parameter file {name}.cnsf")
        out[name] = Tensor(read_tensor(path), requires_grad=True, name=name)
    return out


def _write_manifest(d, items: dict[str, str]) -> None:
    with open(os.path.join(d, "manifest.txt"), "w") as fh:
        for k, v in items.items():
            fh.write(f"{k}={v}\n")


def read_manifest(d) -> dict[str, str]:
    path = os.path.join(d, "manifest.txt")
    if not os.path.exists(path):
        raise CheckpointError(f"no manifest.txt in checkpoint directory {d}")
    items = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                k, v = line.split("=", 1)
                items[k] = v
    return items


def save_generator(d, gen: GeneratorParams) -> None:
    os.makedirs(d, exist_ok=True)
    f, h = gen.field, gen.hyper
    names = _write_params(d, gen.params)
    _write_manifest(d, {
        "kind": "generator",
        "mode": f.mode.value,
        "widths": _ints(f.widths),
        "m": str(f.encoding.m),
        "include_raw": str(int(f.encoding.include_raw)),
        "encoding": str(int(f.encoding.enabled)),
        "N_s": str(f.n_source),
        "N_t": str(f.n_target),
        "use_intensity": str(int(f.use_intensity)),
        "slope": repr(f.slope),
        "hyper_blocks": _ints(h.stage_blocks),
        "hyper_widths": _ints(h.stage_widths),
        "fpn_width": str(h.fpn_width),
        "hyper_norm": str(int(h.norm)),
        "params": ",".join(names),
    })


def load_generator(d) -> GeneratorParams:
    m = read_manifest(d)
    if m.get("kind") != "generator":
        raise CheckpointError(f"{d} is not a generator checkpoint (kind={m.get('kind')!r})")
    widths = _to_ints(m["widths"])
    enc = EncodingConfig(m=int(m["m"]), include_raw=bool(int(m["include_raw"])),
                         enabled=bool(int(m.get("encoding", "1"))))
    fcfg = FieldConfig(hidden=widths[:-1], n_source=int(m["N_s"]), n_target=int(m["N_t"]), mode=m["mode"],
                       use_intensity=bool(int(m["use_intensity"])), encoding=enc, slope=float(m["slope"]))
    if widths[-1] != fcfg.n_target:
        raise CheckpointError(f"output width {widths[-1]} does not match N_t={fcfg.n_target}")
    hcfg = HypernetConfig(_to_ints(m["hyper_blocks"]), _to_ints(m["hyper_widths"]), int(m["fpn_width"]),
                          bool(int(m["hyper_norm"])))
    params = _read_params(d, m["params"].split(","))
    c = params["hyper.proj.b"].shape[0]
    if c != fcfg.latent_channels:
        raise CheckpointError(f"latent has {c} channels but the {fcfg.mode.value} field needs {fcfg.latent_channels}")
    return GeneratorParams(fcfg, hcfg, params)


def save_discriminator(d, disc: DiscriminatorParams) -> None:
    os.makedirs(d, exist_ok=True)
    c = disc.config
    names = _write_params(d, disc.params)
    _write_manifest(d, {
        "kind": "discriminator",
        "in_channels": str(disc.in_channels),
        "filters": _ints(c.filters),
        "strides": _ints(c.strides),
        "kernel": str(c.kernel),
        "pad": str(c.pad),
        "slope": repr(c.slope),
        "params": ",".join(names),
    })


def load_discriminator(d) -> DiscriminatorParams:
    m = read_manifest(d)
    if m.get("kind") != "discriminator":
        raise CheckpointError(f"{d} is not a discriminator checkpoint (kind={m.get('kind')!r})")
    cfg = DiscriminatorConfig(_to_ints(m["filters"]), _to_ints(m["strides"]), int(m["kernel"]), int(m["pad"]),
                              float(m["slope"]))
    return DiscriminatorParams(cfg, int(m["in_channels"]), _read_params(d, m["params"].split(",")))


def save_models(d, gen: GeneratorParams, disc: DiscriminatorParams | None = None) -> None:
    save_generator(os.path.join(d, "generator"), gen)
    if disc is not None:
        save_discriminator(os.path.join(d, "discriminator"), disc)


def params_equal(a: dict[str, Tensor], b: dict[str, Tensor]) -> bool:
    return a.keys() == b.keys() and all(np.array_equal(a[k].data, b[k].data) for k in a)
