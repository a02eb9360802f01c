import numpy as np
import pytest

from tdg.pipeline import (
    AttributeGroup,
    FilterOutcome,
    GeneratedSample,
    PairingSpec,
    Provenance,
    emit_manifest,
    payload_reference,
    sample_identifier,
)


def tie_noise_oracle(eps1, eps2, eta):
    """Brute-force percentile tying: sort, linear interpolation, <= compare.

    Pure-Python reimplementation of the declared convention, kept
    independent of the vectorized production path.
    """
    e1 = [float(v) for v in eps1]
    e2 = [float(v) for v in eps2]
    if eta == 0.0:
        return e1
    diffs = sorted(abs(a - b) for a, b in zip(e1, e2))
    n = len(diffs)
    h = eta * (n - 1)
    lo = int(h)
    if lo >= n - 1:
        threshold = diffs[n - 1]
    else:
        threshold = diffs[lo] + (h - lo) * (diffs[lo + 1] - diffs[lo])
    return [
        0.5 * (a + b) if abs(a - b) <= threshold else a
        for a, b in zip(e1, e2)
    ]


def make_pairing(
    reference="Blue Jay",
    group_name="crown color",
    options=("blue", "yellow", "black"),
    s_plus="yellow",
    s_minus="blue",
    guide="bird",
    category="color",
):
    return PairingSpec(
        reference_class=reference,
        group=AttributeGroup(group_name, tuple(options)),
        s_plus=s_plus,
        s_minus=s_minus,
        guidance_class=guide,
        category=category,
    )


def samples_for(pairing, confidences, correct_mask=None, answers=None):
    """Judged samples with given confidences; correct ones answer s_plus."""
    out = []
    for seed, conf in enumerate(confidences):
        if answers is not None:
            answer = answers[seed]
        elif correct_mask is not None:
            answer = pairing.s_plus if correct_mask[seed] else pairing.s_minus
        else:
            answer = pairing.s_plus
        payload = (float(seed), float(conf))
        out.append(
            GeneratedSample(
                sample_id=sample_identifier(pairing.pairing_id, seed),
                pairing_id=pairing.pairing_id,
                seed=seed,
                payload=payload,
                payload_ref=payload_reference(payload),
                oracle_answer=answer,
                oracle_confidence=float(conf),
                vqa_prompt="q",
            )
        )
    return out


def tiny_manifest(n_pairings=2, per_pairing=5, config_hash="deadbeef"):
    """A small retained manifest spanning two attribute groups."""
    specs = [
        make_pairing(),
        make_pairing(
            reference="Cardinal",
            group_name="breast pattern",
            options=("solid", "spotted", "striped", "multi-colored"),
            s_plus="spotted",
            s_minus="solid",
            guide="Brown Thrasher",
            category="texture",
        ),
        make_pairing(
            reference="Mallard",
            group_name="wing color",
            options=("blue", "green", "white", "grey"),
            s_plus="white",
            s_minus="green",
            guide="bird",
            category="color",
        ),
    ][:n_pairings]
    outcomes = []
    rng = np.random.default_rng(17)
    for pairing in specs:
        confs = np.round(rng.uniform(0.5, 1.0, per_pairing), 6)
        samples = samples_for(pairing, confs)
        outcomes.append(
            (
                pairing,
                FilterOutcome(
                    pairing_id=pairing.pairing_id,
                    eliminated=False,
                    retained=tuple(samples),
                    generated_count=per_pairing * 10,
                    correct_count=per_pairing,
                    retain_count=per_pairing,
                ),
            )
        )
    provenance = Provenance(
        config_hash=config_hash,
        seeds=tuple(range(per_pairing)),
        retain_count=per_pairing,
    )
    return emit_manifest(outcomes, provenance)


@pytest.fixture
def manifest():
    return tiny_manifest()
