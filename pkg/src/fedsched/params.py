"""Radio/geometry parameters and scheduling-policy identifiers."""

from __future__ import annotations

import enum
import math
import re
import warnings
from dataclasses import dataclass, replace


def db_to_linear(x_db):
    return 10.0 ** (x_db / 10.0)


def linear_to_db(x):
    return 10.0 * math.log10(x)


class Policy(str, enum.Enum):
    RS = "RS"
    RR = "RR"
    PF = "PF"
    NS = "NS"
    ONE_SHOT = "OneShot"
    MULTI_ROUND = "MultiRound"


_ALIASES = {
    "rs": Policy.RS,
    "random": Policy.RS,
    "rr": Policy.RR,
    "rr_scheduled": Policy.RR,
    "round_robin": Policy.RR,
    "pf": Policy.PF,
    "proportional_fair": Policy.PF,
    "ns": Policy.NS,
    "no_schedule": Policy.NS,
    "oneshot": Policy.ONE_SHOT,
    "one_shot": Policy.ONE_SHOT,
    "os": Policy.ONE_SHOT,
    "multiround": Policy.MULTI_ROUND,
    "multi_round": Policy.MULTI_ROUND,
    "mr": Policy.MULTI_ROUND,
}

_MR_RE = re.compile(r"^(?:multiround|multi_round|mr)\s*\(?\s*(\d+)\s*\)?$", re.IGNORECASE)


def parse_policy(name) -> tuple[Policy, int | None]:
    """Parse ``"PF"``, ``"RR_scheduled"``, ``"MultiRound(4)"`` etc.

    Returns the policy and the multi-round aggregation period (None unless
    the policy is MultiRound).
    """
    if isinstance(name, Policy):
        return name, None
    text = str(name).strip()
    m = _MR_RE.match(text)
    if m:
        return Policy.MULTI_ROUND, int(m.group(1))
    try:
        return _ALIASES[text.lower()], None
    except KeyError:
        raise ValueError(f"unknown policy id {name!r}") from None


def policy_label(policy: Policy, multi_round: int | None = None) -> str:
    if policy is Policy.MULTI_ROUND:
        return f"MultiRound({multi_round})"
    return policy.value


@dataclass(frozen=True)
class NetworkParams:
    """Symbols of the typical-cell uplink model.

    Units: ``ap_density`` per m^2, powers in watts, ``sinr_threshold`` linear.
    ``tx_power`` and ``noise_power`` defaults put the network in the
    interference-limited regime at the default density.
    """

    ap_density: float = 1e-4
    ues_per_cell: int = 100
    subchannels: int = 10
    tx_power: float = 0.2
    noise_power: float = 1e-13
    path_loss_exp: float = 3.8
    sinr_threshold: float = 1.0

    def __post_init__(self):
        if not self.ap_density > 0:
            raise ValueError("ap_density must be positive")
        if self.subchannels < 1 or self.ues_per_cell < self.subchannels:
            raise ValueError("need ues_per_cell >= subchannels >= 1")
        if not self.path_loss_exp > 2:
            raise ValueError("path_loss_exp must exceed 2 (mean interference diverges)")
        if not self.tx_power > 0:
            raise ValueError("tx_power must be positive")
        if self.noise_power < 0:
            raise ValueError("noise_power must be non-negative")
        if not self.sinr_threshold > 0:
            raise ValueError("sinr_threshold must be positive")
        if self.ues_per_cell % self.subchannels:
            warnings.warn(
                f"K={self.ues_per_cell} is not a multiple of N={self.subchannels}; "
                f"using G=ceil(K/N)={self.group_ratio}",
                stacklevel=3,
            )

    @property
    def group_ratio(self) -> int:
        return -(-self.ues_per_cell // self.subchannels)

    @property
    def group_ratio_exact(self) -> bool:
        return self.ues_per_cell % self.subchannels == 0

    @property
    def theta_db(self) -> float:
        return linear_to_db(self.sinr_threshold)

    def with_(self, **changes) -> "NetworkParams":
        if "theta_db" in changes:
            changes["sinr_threshold"] = db_to_linear(changes.pop("theta_db"))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return replace(self, **changes)
