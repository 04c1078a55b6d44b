"""Deterministic synthetic rating datasets used by several test modules.

The values are frozen constructions, not samples: the preference fixture
realizes the 21/3/10/4 participant partition exactly, and the moments
fixture realizes the closest moments an integral 1..7 corpus can take to
the reported slow aesthetic-pleasantness mean/SD (5.5395 / 0.8861; an exact
round to 5.54/0.88 is impossible for 76 integers because an odd sum forces
an odd sum of squares).
"""

from artstudio.psychstats import RatingRecord

TS = "2026-01-15T10:00:00+00:00"

# 76 aesthetic-pleasantness slow scores: 5x4, 40x5, 16x6, 15x7
MOMENT_SCORES = [4] * 5 + [5] * 40 + [6] * 16 + [7] * 15
assert len(MOMENT_SCORES) == 76
assert sum(MOMENT_SCORES) == 421
assert sum(v * v for v in MOMENT_SCORES) == 2391


def _record(pid, pair, speed, idx, lik, aes, art):
    return RatingRecord(
        participant_id=pid, pair_id=pair, speed=speed, presentation_index=idx,
        likability=lik, aesthetic_pleasantness=aes, artistic_value=art,
        timestamp=TS,
    )


def moment_records():
    """38 complete participants whose 76 slow aesthetic scores are the frozen
    multiset above; other dimensions hold unremarkable valid scores."""
    records = []
    scores = iter(MOMENT_SCORES)
    for i in range(38):
        pid = f"P{i:02d}"
        for j, pair in enumerate(("abstract", "portrait")):
            aes_slow = next(scores)
            records.append(_record(pid, pair, "slow", 2 * j, 5, aes_slow, 5))
            records.append(_record(pid, pair, "fast", 2 * j + 1, 4, 4, 5))
    return records


# preference patterns: (slow scores, fast scores) per pair
_SLOW_WINS = ((6, 6, 6), (4, 4, 4))
_FAST_WINS = ((3, 4, 3), (5, 5, 6))

PARTITION_LAYOUT = (
    ("always_slow", 21, {"abstract": _SLOW_WINS, "portrait": _SLOW_WINS}),
    ("always_fast", 3, {"abstract": _FAST_WINS, "portrait": _FAST_WINS}),
    ("slow_abstract_fast_portrait", 10, {"abstract": _SLOW_WINS, "portrait": _FAST_WINS}),
    ("slow_portrait_fast_abstract", 4, {"abstract": _FAST_WINS, "portrait": _SLOW_WINS}),
)


def partition_records():
    """38 complete participants realizing the 21/3/10/4 preference partition."""
    records = []
    pid_counter = 0
    for _, count, patterns in PARTITION_LAYOUT:
        for _ in range(count):
            pid = f"P{pid_counter:02d}"
            pid_counter += 1
            for j, pair in enumerate(("abstract", "portrait")):
                slow_scores, fast_scores = patterns[pair]
                records.append(_record(pid, pair, "slow", 2 * j, *slow_scores))
                records.append(_record(pid, pair, "fast", 2 * j + 1, *fast_scores))
    assert pid_counter == 38
    return records


def likability_difference_samples():
    """38 paired samples whose differences have mean exactly 1.00 and sample
    SD exactly 1.376, reproducing the reported t(37) = 4.48."""
    c = 1.376 * (37 / 38) ** 0.5
    diffs = [1.0 + c] * 19 + [1.0 - c] * 19
    x = diffs
    y = [0.0] * 38
    return x, y
