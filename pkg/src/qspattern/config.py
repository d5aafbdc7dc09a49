"""Parameter-file handling (TOML or JSON) with a fixed schema.

Top-level keys: D_c, beta, alpha0, lambda, epsilon, L, rho_star, plus the
two tables ``motility`` (D_star, D_inf, D_prime_star, u_star_ref) and
``production`` (a, V, K).  The file key ``lambda`` maps to the attribute
``lam`` (reserved word).  Round trips are lossless: floats are written
with full precision.
"""

from __future__ import annotations

import json
from pathlib import Path

from .errors import ConfigError
from .model import ModelParams, MotilitySpec, ProductionSpec

__all__ = ["load_params", "save_params", "params_to_dict", "params_from_dict"]

_TOP_KEYS = ("D_c", "beta", "alpha0", "lambda", "epsilon", "L", "rho_star")
_MOTILITY_KEYS = ("D_star", "D_inf", "D_prime_star", "u_star_ref")
_PRODUCTION_KEYS = ("a", "V", "K")


def params_from_dict(data: dict) -> ModelParams:
    try:
        mot = {k: float(data["motility"][k]) for k in _MOTILITY_KEYS}
        prod = {k: float(data["production"][k]) for k in _PRODUCTION_KEYS}
        top = {k: float(data[k]) for k in _TOP_KEYS}
    except KeyError as exc:
        raise ConfigError(f"missing parameter field: {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"non-numeric parameter value: {exc}") from exc
    return ModelParams(
        D_c=top["D_c"],
        beta=top["beta"],
        alpha0=top["alpha0"],
        lam=top["lambda"],
        epsilon=top["epsilon"],
        L=top["L"],
        rho_star=top["rho_star"],
        motility=MotilitySpec(**mot),
        production=ProductionSpec(**prod),
    )


def params_to_dict(params: ModelParams) -> dict:
    return {
        "D_c": params.D_c,
        "beta": params.beta,
        "alpha0": params.alpha0,
        "lambda": params.lam,
        "epsilon": params.epsilon,
        "L": params.L,
        "rho_star": params.rho_star,
        "motility": {
            "D_star": params.motility.D_star,
            "D_inf": params.motility.D_inf,
            "D_prime_star": params.motility.D_prime_star,
            "u_star_ref": params.motility.u_star_ref,
        },
        "production": {
            "a": params.production.a,
            "V": params.production.V,
            "K": params.production.K,
        },
    }


def load_params(path: str | Path) -> ModelParams:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"parameter file not found: {path}")
    if path.suffix.lower() == ".toml":
        try:
            import tomllib  # Python >= 3.11
        except ModuleNotFoundError:
            import tomli as tomllib
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    elif path.suffix.lower() == ".json":
        with open(path) as fh:
            data = json.load(fh)
    else:
        raise ConfigError(f"unsupported parameter file type: {path.suffix!r} (use .toml or .json)")
    return params_from_dict(data)


def save_params(params: ModelParams, path: str | Path) -> None:
    path = Path(path)
    data = params_to_dict(params)
    if path.suffix.lower() == ".json":
        with open(path, "w") as fh:
            json.dump(data, fh, indent=2)
            fh.write("\n")
    elif path.suffix.lower() == ".toml":
        lines = []
        for k in _TOP_KEYS:
            key = "lambda" if k == "lambda" else k
            lines.append(f"{key} = {data[key]!r}")
        for table in ("motility", "production"):
            lines.append(f"\n[{table}]")
            for k, v in data[table].items():
                lines.append(f"{k} = {v!r}")
        path.write_text("\n".join(lines) + "\n")
    else:
        raise ConfigError(f"unsupported parameter file type: {path.suffix!r}")
