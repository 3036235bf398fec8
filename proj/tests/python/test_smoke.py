import json
import math

import pytest

import remdp


@pytest.fixture(scope="module")
def data():
    return remdp.synthetic_titanic_shaped(0, rows=250)


@pytest.fixture(scope="module")
def workload(data):
    return data.domain.all_k_way(2)[:4]


def test_domain_round_trip(data, tmp_path_factory):
    domain = data.domain
    assert domain.dim == 9
    assert domain.universe_size == pytest.approx(88704000.0)
    parsed = remdp.Domain.from_json(domain.to_json())
    assert parsed.to_json() == domain.to_json()
    path = tmp_path_factory.mktemp("d") / "domain.json"
    domain.save(str(path))
    assert remdp.Domain.load(str(path)).dim == 9


def test_csv_round_trip(data, tmp_path):
    path = tmp_path / "data.csv"
    remdp.save_csv(data, str(path))
    back = remdp.load_csv(str(path), data.domain)
    assert len(back) == len(data)
    g = data.domain.all_k_way(1)[0]
    assert back.exact_marginal(list(g)) == data.exact_marginal(list(g))


def test_exact_marginal_total(data):
    total = data.exact_marginal([])
    assert total == [float(len(data))]


def test_privacy_conversions():
    rho = remdp.solve_rho(1.0, 1e-9)
    assert 0 < rho < 1
    delta = remdp.zcdp_to_eps_delta(rho, 1.0)
    assert delta == pytest.approx(1e-9, rel=1e-5)


def test_residualplanner_replay(data, workload):
    run = remdp.run_residualplanner_style(data, workload, eps=1.0, seed=7)
    assert set(run["marginals"]) == set(workload)
    assert sum(r for _, r in run["spends"]) == pytest.approx(run["rho"], rel=1e-12)
    again = remdp.run_residualplanner_style(data, workload, eps=1.0, seed=7)
    assert again["archive"] == run["archive"]
    replayed = remdp.replay(data.domain, run["archive"], workload)
    assert replayed == run["marginals"]


def test_noiseless_matches_exact(data, workload):
    run = remdp.run_residualplanner_style(data, workload, noiseless=True)
    for g in workload:
        exact = data.exact_marginal(list(g))
        got = run["marginals"][g]
        assert all(math.isclose(a, b, abs_tol=1e-9) for a, b in zip(got, exact))


def test_mwem_ledger_and_manifest(data, workload):
    run = remdp.run_scalable_mwem(data, workload, rounds=4, eps=0.5, seed=2, audit=True)
    assert sum(r for _, r in run["spends"]) == pytest.approx(run["rho"], abs=1e-12)
    assert len(run["selected"]) == 4
    manifest = json.loads(run["manifest"])
    assert manifest["mechanism"] == "smwem"
    assert len(manifest["rounds"]) == 4


def test_lnn_nonnegative(data, workload):
    run = remdp.run_residualplanner_style(data, workload, eps=0.3, seed=5)
    mle_min = min(min(v) for v in run["marginals"].values())
    assert mle_min < 0  # noise at this budget forces negative cells
    result = remdp.grem_lnn(data.domain, run["archive"], workload)
    assert result["converged"]
    bound = -1e-6 * max(1.0, float(len(data)))
    assert min(min(v) for v in result["marginals"].values()) >= bound
    report = json.loads(result["report"])
    assert report["rounds"] > 0


def test_postprocessors_and_error():
    assert remdp.trunc([-1.0, 2.0]) == [0.0, 2.0]
    out = remdp.trunc_rescale([-1.0, 2.0, 3.0])
    assert out == pytest.approx([0.0, 1.6, 2.4])
    domain = remdp.Domain.from_json(
        json.dumps({"attributes": [{"name": "a", "size": 2}]})
    )
    err = remdp.workload_error(domain, {("a",): [1.0, 2.0]}, {("a",): [2.0, 0.0]}, 1)
    assert err == pytest.approx(3.0)


def test_budget_error(data):
    workload = [("survived",)]
    scales = {(): 1e-9, ("survived",): 1e-9}
    with pytest.raises(remdp.BudgetError):
        remdp.run_residualplanner_style(data, workload, eps=0.1, scales=scales)
