"""Independent brute-force reference implementations for metric checks.

Pure-python loops over plain tuples, deliberately sharing no code with the
package's numpy paths.
"""

import math


def brute_ade(pred, gt):
    assert len(pred) == len(gt) and len(pred) >= 1
    total = 0.0
    for (px, py), (gx, gy) in zip(pred, gt):
        total += math.hypot(px - gx, py - gy)
    return total / len(pred)


def brute_fde(pred, gt):
    assert len(pred) == len(gt) and len(pred) >= 1
    (px, py), (gx, gy) = pred[-1], gt[-1]
    return math.hypot(px - gx, py - gy)


def brute_score(candidates, gt):
    """Per-candidate errors plus independent minima/argmins over the set."""
    ades = [brute_ade(c, gt) for c in candidates]
    fdes = [brute_fde(c, gt) for c in candidates]
    min_ade = min(ades)
    min_fde = min(fdes)
    return {
        "ades": ades,
        "fdes": fdes,
        "min_ade": min_ade,
        "min_fde": min_fde,
        "argmin_ade": ades.index(min_ade),
        "argmin_fde": fdes.index(min_fde),
    }


def brute_reaggregate(instants):
    """Flat recomputation of scene-level means from stored instant errors."""
    by_agent = {}
    for inst in instants:
        by_agent.setdefault(inst.agent_id, []).append(inst)
    agent_ades = []
    agent_fdes = []
    for errs in by_agent.values():
        agent_ades.append(sum(e.min_ade for e in errs) / len(errs))
        agent_fdes.append(sum(e.min_fde for e in errs) / len(errs))
    if not agent_ades:
        return None, None
    return sum(agent_ades) / len(agent_ades), sum(agent_fdes) / len(agent_fdes)
