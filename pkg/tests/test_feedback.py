"""Unit tests for exact counting, feedback vectors, and capacity."""

import math
from fractions import Fraction

import pytest

from flexfeed import (
    DeadEnd,
    FeedbackVector,
    Instance,
    OperationalConstraints,
    Session,
    SignalGrid,
    ValidationError,
    count_feasible,
    entropy,
    enumerate_feasible,
    joint_probability,
    optimal_feedback,
    replay_prefix,
    system_capacity,
)
from flexfeed.feedback import _CountCache

from conftest import (
    brute_completions,
    brute_feasible_set,
    brute_one_step,
    feasible_prefixes,
    make_toy,
    random_instance,
)

LOG2_3 = math.log2(3.0)


# ---------------------------------------------------------------- vectors


def test_feedback_vector_validation():
    g = SignalGrid((0.0, 1.0))
    with pytest.raises(ValidationError):
        FeedbackVector(g, (0.4, 0.4))  # does not sum to 1
    with pytest.raises(ValidationError):
        FeedbackVector(g, (1.0,))  # wrong length
    with pytest.raises(ValidationError):
        FeedbackVector(g, (1.5, -0.5))  # negative entry
    with pytest.raises(ValidationError):
        FeedbackVector(g, (0.5, 0.5), mode="fuzzy")
    with pytest.raises(ValidationError):
        FeedbackVector(g, (0.5, 0.5), mode="lookahead")  # missing depth
    fv = FeedbackVector(g, (0.0, 1.0))
    assert fv.support == (1.0,)


# ---------------------------------------------------------------- toy goldens


def test_toy_feasible_set(toy):
    assert enumerate_feasible(toy, "LLF") == [
        (0.0, 0.0, 1.0),
        (0.0, 1.0, 0.0),
        (1.0, 0.0, 0.0),
    ]
    assert count_feasible(toy, "LLF") == 3


def test_toy_first_slot_feedback(toy):
    fv = optimal_feedback(toy, "LLF")
    assert fv.counts == (2, 1)
    assert fv.probabilities == (2.0 / 3.0, 1.0 / 3.0)
    assert fv.mode == "exact"
    assert entropy(fv) == pytest.approx(
        -(2 / 3) * math.log2(2 / 3) - (1 / 3) * math.log2(1 / 3), abs=1e-12
    )


def test_toy_feedback_after_prefix(toy):
    fv = optimal_feedback(toy, "LLF", (0.0,))
    assert fv.probabilities == (0.5, 0.5)
    fv = optimal_feedback(toy, "LLF", (1.0,))
    assert fv.probabilities == (1.0, 0.0)
    fv = optimal_feedback(toy, "LLF", (0.0, 0.0))
    assert fv.probabilities == (0.0, 1.0)


def test_toy_capacity(toy):
    assert system_capacity(toy, "LLF") == pytest.approx(LOG2_3, abs=1e-12)
    assert system_capacity(toy, "LLF", log_base=math.e) == pytest.approx(
        math.log(3.0), abs=1e-12
    )


def test_toy_joint_probability(toy):
    for member in enumerate_feasible(toy, "LLF"):
        assert joint_probability(toy, "LLF", member) == pytest.approx(
            1.0 / 3.0, abs=1e-15
        )
    assert joint_probability(toy, "LLF", (1.0, 1.0, 1.0)) == 0.0
    assert joint_probability(toy, "LLF", (0.0, 0.0, 0.0)) == 0.0


# ---------------------------------------------------------------- prefixes


def test_replay_prefix_statuses(toy):
    assert replay_prefix(toy, "LLF", ()).status == "ok"
    assert replay_prefix(toy, "LLF", (0.0, 0.0)).status == "ok"
    # Signal 1 in slot 2 after delivering 1 in slot 1 cannot be tracked.
    assert replay_prefix(toy, "LLF", (1.0, 1.0)).status == "violated"

    # A clean prefix can still strand a session: two zero slots leave one
    # unit to deliver in one slot, fine; on a wider session it is fatal.
    inst = Instance(3, (Session("a", 1, 3, 2.0, 1.0),), SignalGrid((0.0, 1.0)))
    ps = replay_prefix(inst, "LLF", (0.0, 0.0))
    assert ps.status == "doomed"


def test_dead_end_reasons(toy):
    with pytest.raises(DeadEnd) as err:
        optimal_feedback(toy, "LLF", (1.0, 1.0))
    assert err.value.reason == "already_infeasible"
    assert err.value.slot == 3

    inst = Instance(3, (Session("a", 1, 3, 2.0, 1.0),), SignalGrid((0.0, 1.0)))
    with pytest.raises(DeadEnd) as err:
        optimal_feedback(inst, "LLF", (0.0, 0.0))
    assert err.value.reason == "no_feasible_completion"

    # Demand exceeds what the grid can ever deliver: empty feasible set.
    empty = Instance(2, (Session("a", 1, 2, 2.0, 1.0),), SignalGrid((0.0, 0.5)))
    with pytest.raises(DeadEnd) as err:
        optimal_feedback(empty, "LLF")
    assert err.value.reason == "no_feasible_completion"
    with pytest.raises(DeadEnd):
        system_capacity(empty, "LLF")
    with pytest.raises(DeadEnd):
        joint_probability(empty, "LLF", (0.0, 0.0))


def test_feedback_rejects_full_length_prefix(toy):
    with pytest.raises(ValidationError):
        optimal_feedback(toy, "LLF", (0.0, 0.0, 1.0))
    with pytest.raises(ValidationError):
        replay_prefix(toy, "LLF", (0.0,) * 4)


# ------------------------------------------------------- oracle agreement


SWEEP_SEEDS = range(60)


@pytest.mark.parametrize("seed", SWEEP_SEEDS)
def test_counts_match_brute_force(seed):
    inst = random_instance(seed, max_horizon=4, max_levels=3, max_sessions=3)
    for policy in ("LLF", "EDF", "FIM"):
        members = brute_feasible_set(inst, policy)
        assert count_feasible(inst, policy) == len(members)
        assert enumerate_feasible(inst, policy) == members
        for prefix in feasible_prefixes(members, inst.horizon):
            assert count_feasible(inst, policy, prefix) == len(
                brute_completions(inst, policy, prefix)
            )


@pytest.mark.parametrize("seed", range(30))
def test_feedback_ratios_match_brute_force(seed):
    inst = random_instance(seed, max_horizon=4, max_levels=3, max_sessions=3)
    for policy in ("LLF", "EDF", "FIM"):
        members = brute_feasible_set(inst, policy)
        if not members:
            with pytest.raises(DeadEnd):
                optimal_feedback(inst, policy)
            continue
        for prefix in feasible_prefixes(members, inst.horizon):
            fv = optimal_feedback(inst, policy, prefix)
            parent = len(brute_completions(inst, policy, prefix))
            for x, p in zip(inst.grid.levels, fv.probabilities):
                child = len(brute_completions(inst, policy, prefix + (x,)))
                assert p == child / parent
            assert set(fv.support) == set(brute_one_step(inst, policy, prefix))


@pytest.mark.parametrize("seed", range(30))
def test_count_recursion_is_consistent(seed):
    inst = random_instance(seed, max_horizon=4, max_levels=3, max_sessions=3)
    for policy in ("LLF", "EDF", "FIM"):
        members = brute_feasible_set(inst, policy)
        for prefix in feasible_prefixes(members, inst.horizon):
            total = count_feasible(inst, policy, prefix)
            split = sum(
                count_feasible(inst, policy, prefix + (x,)) for x in inst.grid.levels
            )
            assert total == split


# ----------------------------------------------------- information laws


def test_chain_rule_on_toy(toy):
    members = enumerate_feasible(toy, "LLF")
    n = len(members)
    acc = 0.0
    for prefix in feasible_prefixes(members, toy.horizon):
        weight = count_feasible(toy, "LLF", prefix) / n
        acc += weight * entropy(optimal_feedback(toy, "LLF", prefix))
    assert acc == pytest.approx(system_capacity(toy, "LLF"), abs=1e-12)


@pytest.mark.parametrize("seed", range(12))
def test_chain_rule_on_random_instances(seed):
    """Summing prefix-weighted feedback entropies over the whole tree must
    reproduce the log of the feasible count."""
    inst = random_instance(seed, max_horizon=4, max_levels=3, max_sessions=3)
    for policy in ("LLF", "EDF", "FIM"):
        members = brute_feasible_set(inst, policy)
        if not members:
            continue
        n = len(members)
        acc = 0.0
        for prefix in feasible_prefixes(members, inst.horizon):
            weight = count_feasible(inst, policy, prefix) / n
            acc += weight * entropy(optimal_feedback(inst, policy, prefix))
        assert acc == pytest.approx(math.log2(n), abs=1e-9)


@pytest.mark.parametrize("seed", range(12))
def test_positive_conditionals_characterize_membership(seed):
    """A trajectory is feasible exactly when every per-slot conditional
    probability along it is positive."""
    inst = random_instance(seed, max_horizon=3, max_levels=3, max_sessions=2)
    import itertools

    for policy in ("LLF", "EDF"):
        members = set(brute_feasible_set(inst, policy))
        if not members:
            continue
        for traj in itertools.product(inst.grid.levels, repeat=inst.horizon):
            conditionals = []
            alive = True
            for t in range(inst.horizon):
                try:
                    fv = optimal_feedback(inst, policy, traj[:t])
                except DeadEnd:
                    alive = False
                    break
                p = fv.probabilities[inst.grid.index_of(traj[t])]
                conditionals.append(p)
                if p == 0.0:
                    alive = False
                    break
            assert alive == (traj in members)
            if alive:
                product = math.prod(conditionals)
                assert product == pytest.approx(1.0 / len(members), rel=1e-12)


def test_joint_probability_is_uniform_on_members(seed=0):
    inst = random_instance(seed, max_horizon=4, max_levels=3, max_sessions=3)
    members = brute_feasible_set(inst, "LLF")
    if not members:
        pytest.skip("seed produced an empty feasible set")
    for m in members:
        assert joint_probability(inst, "LLF", m) == pytest.approx(
            1.0 / len(members), abs=1e-12
        )


# ---------------------------------------------------------------- entropy


def test_entropy_properties():
    g = SignalGrid((0.0, 1.0, 2.0, 3.0))
    uniform = FeedbackVector(g, (0.25,) * 4)
    assert entropy(uniform) == pytest.approx(2.0, abs=1e-12)
    assert entropy(uniform, log_base=4.0) == pytest.approx(1.0, abs=1e-12)
    point = FeedbackVector(g, (0.0, 1.0, 0.0, 0.0))
    assert entropy(point) == 0.0
    with pytest.raises(ValidationError):
        entropy(uniform, log_base=1.0)
    with pytest.raises(ValidationError):
        entropy(uniform, log_base=-2.0)


# ---------------------------------------------------------------- caching


def test_cache_requires_quantized_instance(toy):
    with pytest.raises(ValidationError):
        count_feasible(toy, "LLF", cache_quantum=0.3)
    bad = Instance(2, (Session("a", 1, 2, 0.7, 1.0),), SignalGrid((0.0, 1.0)))
    with pytest.raises(ValidationError):
        count_feasible(bad, "LLF", cache_quantum=0.5)
    with pytest.raises(ValidationError):
        count_feasible(toy, "LLF", cache_quantum=0.0)


@pytest.mark.parametrize("seed", range(25))
def test_cached_counts_equal_uncached(seed):
    inst = random_instance(
        seed, max_horizon=4, max_levels=3, max_sessions=3, allow_constraints=True
    )
    for policy in ("LLF", "EDF", "FIM"):
        plain = count_feasible(inst, policy)
        cached = count_feasible(inst, policy, cache_quantum=0.25)
        assert plain == cached
        if plain:
            a = optimal_feedback(inst, policy).probabilities
            b = optimal_feedback(inst, policy, cache_quantum=0.25).probabilities
            assert a == b


def test_cache_is_reused_across_prefixes(toy):
    cache = _CountCache(toy, 1.0)
    optimal_feedback(toy, "LLF", (), _cache=cache)
    filled = len(cache.store)
    assert filled > 0
    optimal_feedback(toy, "LLF", (0.0,), _cache=cache)
    # The deeper call should mostly hit states already memoized.
    assert len(cache.store) >= filled


# ------------------------------------------------------------ constraints


def test_constraints_shrink_the_feasible_set(toy):
    capped = Instance(
        toy.horizon,
        toy.sessions,
        toy.grid,
        OperationalConstraints(ramp_limit=1.0, initial_signal=0.0),
    )
    assert count_feasible(capped, "LLF") == 3
    # Forbid raising the signal at all: only trajectories starting at 1
    # would deliver, but 1 then cannot drop back to 0.
    frozen = Instance(
        toy.horizon,
        toy.sessions,
        toy.grid,
        OperationalConstraints(ramp_limit=0.0, initial_signal=1.0),
    )
    assert enumerate_feasible(frozen, "LLF") == []
