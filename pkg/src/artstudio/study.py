"""Study configuration and randomized presentation plans.

Each participant sees two pairs of stimuli (abstract, portrait) at two
playback speeds. The pair order and each pair's internal speed order are
randomized independently, uniformly over the 8 possible orderings, derived
deterministically from (study seed, participant id).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

from .errors import DataFormatError, ValidationError
from .motionlab import load_sequence
from .psychstats import PAIRS, SPEEDS
from .seeding import derive_seed

PARTICIPANT_ID_RE = re.compile(r"^[A-Za-z0-9_-]+$")


@dataclass(frozen=True)
class Trial:
    pair_id: str
    speed: str
    stimulus: str  # API path of the stimulus bundle

    def to_dict(self):
        return {"pair_id": self.pair_id, "speed": self.speed, "stimulus": self.stimulus}


@dataclass(frozen=True)
class SessionPlan:
    participant_id: str
    trials: tuple

    def __post_init__(self):
        pairs = [t.pair_id for t in self.trials]
        if len(self.trials) != 4 or set(pairs) != set(PAIRS):
            raise ValidationError("plan must hold 4 trials covering both pairs")
        for pair in PAIRS:
            speeds = [t.speed for t in self.trials if t.pair_id == pair]
            if sorted(speeds) != sorted(SPEEDS):
                raise ValidationError(f"plan must show both speeds of pair {pair}")

    def to_dict(self):
        return {
            "participant_id": self.participant_id,
            "trials": [t.to_dict() for t in self.trials],
        }


def stimulus_path(pair_id: str, speed: str) -> str:
    return f"/api/stimulus/{pair_id}/{speed}"


def make_plan(study_seed: int, participant_id: str) -> SessionPlan:
    """Deterministic per (seed, id); uniform over the 8 valid orderings."""
    if not PARTICIPANT_ID_RE.match(participant_id or ""):
        raise ValidationError(
            f"participant id {participant_id!r} must match [A-Za-z0-9_-]+"
        )
    bits = derive_seed(study_seed, "plan", participant_id)
    pair_order = PAIRS if bits & 1 == 0 else tuple(reversed(PAIRS))
    trials = []
    for i, pair in enumerate(pair_order):
        speed_order = SPEEDS if (bits >> (1 + i)) & 1 == 0 else tuple(reversed(SPEEDS))
        for speed in speed_order:
            trials.append(Trial(pair, speed, stimulus_path(pair, speed)))
    return SessionPlan(participant_id, tuple(trials))


@dataclass
class StudyConfig:
    """Service configuration: stimulus registry, seed, ratings sink, bind."""

    stimuli: dict  # pair -> {speed -> sequence directory}
    study_seed: int
    ratings_path: str
    bind: str = "127.0.0.1:8077"
    ui_dir: str | None = None

    def __post_init__(self):
        for pair in PAIRS:
            if pair not in self.stimuli:
                raise ValidationError(f"config missing stimuli for pair {pair!r}")
            for speed in SPEEDS:
                if speed not in self.stimuli[pair]:
                    raise ValidationError(f"config missing {pair}/{speed} stimulus")

    def validate_stimuli(self):
        """Load every referenced sequence once so broken bundles fail early."""
        for pair in PAIRS:
            for speed in SPEEDS:
                load_sequence(self.stimuli[pair][speed])

    def sequence_dir(self, pair: str, speed: str) -> Path:
        try:
            return Path(self.stimuli[pair][speed])
        except KeyError:
            raise ValidationError(f"unknown stimulus {pair}/{speed}") from None

    @property
    def host(self) -> str:
        return self.bind.rsplit(":", 1)[0]

    @property
    def port(self) -> int:
        return int(self.bind.rsplit(":", 1)[1])

    @classmethod
    def from_file(cls, path) -> "StudyConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise DataFormatError(f"unreadable study config {path}: {exc}") from exc
        known = {"stimuli", "study_seed", "ratings_path", "bind", "ui_dir"}
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown study config keys: {sorted(unknown)}")
        missing = {"stimuli", "study_seed", "ratings_path"} - set(data)
        if missing:
            raise ValidationError(f"study config missing keys: {sorted(missing)}")
        base = Path(path).parent
        stimuli = {
            pair: {speed: str(base / d) for speed, d in speeds.items()}
            for pair, speeds in data["stimuli"].items()
        }
        cfg = cls(
            stimuli=stimuli,
            study_seed=int(data["study_seed"]),
            ratings_path=str(base / data["ratings_path"]),
            bind=data.get("bind", "127.0.0.1:8077"),
            ui_dir=str(base / data["ui_dir"]) if data.get("ui_dir") else None,
        )
        return cfg
