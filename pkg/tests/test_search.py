import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from seetrack.errors import ArgumentError
from seetrack.search import (
    Candidate,
    SearchSpace,
    feasible,
    format_candidates,
    pareto_front,
    profile_at,
    read_accuracy_csv,
    sample_subnet,
    search_run,
    synthetic_accuracy,
    with_accuracy,
)
from seetrack.sim import HwConfig, analytic_profile, weight_footprint

from conftest import small_spec
from oracles import nondominated_bruteforce

SPEC = small_spec()


def cand(lat, acc):
    return Candidate(SPEC, lat, 0, acc)


def test_pareto_example():
    front = pareto_front([cand(1, 0.90), cand(2, 0.95), cand(1.5, 0.85)])
    assert [(c.latency_est, c.accuracy) for c in front] == [(1, 0.90), (2, 0.95)]


def test_pareto_single_and_duplicates():
    assert pareto_front([cand(1, 0.5)]) == [cand(1, 0.5)]
    assert len(pareto_front([cand(1, 0.5), cand(1, 0.5), cand(2, 0.4)])) == 2


def test_pareto_missing_accuracy_names_candidate():
    with pytest.raises(ArgumentError, match="candidate 1"):
        pareto_front([cand(1, 0.5), Candidate(SPEC, 2, 0)])


@given(st.lists(st.tuples(st.integers(0, 20), st.integers(0, 20)), max_size=60))
def test_pareto_matches_bruteforce(points):
    cands = [cand(float(a), b / 20) for a, b in points]
    keep = nondominated_bruteforce([(c.latency_est, c.accuracy) for c in cands])
    expect = sorted((cands[i].latency_est, cands[i].accuracy) for i in keep)
    got = [(c.latency_est, c.accuracy) for c in pareto_front(cands)]
    assert sorted(got) == expect
    assert [g[0] for g in got] == sorted(g[0] for g in got)


def test_singleton_space_gives_unique_spec():
    space = SearchSpace(block_count=(2, 2), channel_choices=((16,),), expansion_choices=((4,),),
                        gru_hidden_choices=(64,), strides=(1, 2))
    hashes = {sample_subnet(space, s).spec_hash for s in range(20)}
    assert len(hashes) == 1


def test_sampling_deterministic():
    space = SearchSpace()
    assert sample_subnet(space, 7).spec_hash == sample_subnet(space, 7).spec_hash


def test_sampling_uniform_within_five_sigma():
    space = SearchSpace(block_count=(2, 3), channel_choices=((16, 24),), expansion_choices=((2, 4),),
                        gru_hidden_choices=(32, 64), stem_channel_choices=(8, 16))
    n = 1000
    counts = {"blocks": 0, "ch": 0, "t": 0, "gru": 0, "stem": 0}
    for s in range(n):
        spec = sample_subnet(space, np.random.SeedSequence([99, s]))
        counts["blocks"] += len(spec.blocks) == 2
        counts["ch"] += spec.blocks[0].out_channels == 16
        counts["t"] += spec.blocks[0].expansion_ratio == 2
        counts["gru"] += spec.gru_hidden == 32
        counts["stem"] += spec.stem_channels == 8
    sigma = (n * 0.25) ** 0.5
    for k, v in counts.items():
        assert abs(v - n / 2) <= 5 * sigma, k


def test_feasible_boundaries():
    hw = HwConfig()
    prof = analytic_profile(SPEC, 0.05)
    assert not feasible(SPEC, hw, 0.0, prof)[0]
    assert feasible(SPEC, HwConfig(weight_budget_bytes=10 ** 12), 1e9, prof)[0]
    exact = HwConfig(weight_budget_bytes=weight_footprint(SPEC))
    assert feasible(SPEC, exact, 1e9, prof)[0]
    assert not feasible(SPEC, HwConfig(weight_budget_bytes=weight_footprint(SPEC) - 1), 1e9, prof)[0]


def test_search_run_examples():
    space = SearchSpace(block_count=(2, 2), channel_choices=((16,),), expansion_choices=((4,),),
                        gru_hidden_choices=(64,), strides=(1, 2))
    assert len(search_run(space, HwConfig(), 1e9, profile_at(0.05), 1, 0)) == 1
    assert search_run(SearchSpace(), HwConfig(weight_budget_bytes=0), 1e9, profile_at(0.05), 20, 0) == []
    assert search_run(SearchSpace(), HwConfig(), 1e9, profile_at(0.05), 0, 0) == []


def test_search_run_deterministic_across_threads():
    runs = [search_run(SearchSpace(), HwConfig(), 1e-3, profile_at(0.05), 60, 3, threads=t) for t in (1, 4, 4)]
    texts = [format_candidates(r) for r in runs]
    assert texts[0] == texts[1] == texts[2]
    assert len({c.spec_hash for c in runs[0]}) == len(runs[0])


def test_search_run_respects_cap_and_budget():
    hw = HwConfig(weight_budget_bytes=40_000)
    for c in search_run(SearchSpace(), hw, 2e-4, profile_at(0.05), 80, 1):
        assert c.weight_bytes <= 40_000 and c.latency_est <= 2e-4


def test_accuracy_join_and_csv():
    cands = search_run(SearchSpace(), HwConfig(), 1e9, profile_at(0.05), 10, 5)
    acc = {c.spec_hash: synthetic_accuracy(c.spec) for c in cands}
    text = "spec_hash,accuracy\n" + "".join(f"{h},{a:.6f}\n" for h, a in acc.items())
    parsed = read_accuracy_csv(text)
    joined = with_accuracy(cands, parsed)
    assert len(joined) == len(cands)
    assert all(abs(c.accuracy - acc[c.spec_hash]) <= 5e-7 for c in joined)
    assert read_accuracy_csv(format_candidates(joined)) == parsed


def test_space_from_dict():
    s = SearchSpace.from_dict({"block_count": [3, 3], "channel_choices": [16, 32], "strides": [1, 1, 2]})
    assert s.channel_choices == ((16, 32),)
    with pytest.raises(ArgumentError):
        SearchSpace.from_dict({"bogus": 1})
    with pytest.raises(ArgumentError):
        SearchSpace.from_dict({"channel_choices": [12]})
