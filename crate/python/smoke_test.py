"""Smoke test for the gscope_py extension.

Build and install first:  pip install --no-build-isolation -e crates/python
Then run:                 python python/smoke_test.py
"""

import json
import math

import gscope_py as g


def main():
    assert g.sample_threshold_n(0.2, 0.1, 2) == 738

    chain = g.FactoredMDP.domain("copy-chain", d=4)
    assert chain.parents == [[0], [1], [2], [3]]
    again = g.FactoredMDP.from_json(chain.to_json())
    assert again.to_json() == chain.to_json()

    behavior = g.Policy.uniform(chain.n_actions)
    target = g.Policy.constant(chain, 1, eps_floor=0.1)
    batch = chain.sample(behavior, 400, seed=3)
    assert len(batch) == 400 and batch.n_transitions == 400 * chain.horizon
    assert g.TrajectoryBatch.from_json(batch.to_json()).data_hash() == batch.data_hash()

    parents, picks = g.learn_parents(batch, 0.2, 0.1, min_count=20)
    assert parents == chain.parents, parents
    assert all(len(p) == 1 for p in picks)

    truth = chain.exact_value(target)
    model = g.LearnedModel.build(batch, parents, 0.2, 0.1, min_count=20)
    assert g.LearnedModel.from_json(model.to_json()).parents == parents
    est = g.evaluate_model(model, chain, target, n_rollouts=2000, seed=1)
    assert est["method"] == "gscope"
    assert abs(est["estimate"] - truth) / truth < 0.1, (est, truth)

    perfect = g.evaluate_model(g.LearnedModel.from_true_model(chain), chain, target, 4000, 2)
    assert abs(perfect["estimate"] - truth) <= 4 * perfect["stderr"] + 1e-9

    on_policy = g.evaluate_cis(batch, behavior, behavior)
    mean_return = sum(batch.returns()) / len(batch)
    assert abs(on_policy["estimate"] - mean_return) < 1e-9
    for r in (
        g.evaluate_mfmc(batch, target, seed=4),
        g.evaluate_flat(batch, chain, target),
        g.evaluate_ks(batch, chain, target, 0.2, 0.1, min_count=20),
    ):
        assert math.isfinite(r["estimate"])

    big = g.FactoredMDP.domain("random-fmdp", d=20, horizon=5)
    big_batch = big.sample(g.Policy.uniform(big.n_actions), 5)
    try:
        g.evaluate_flat(big_batch, big, g.Policy.uniform(big.n_actions))
        raise AssertionError("flat model on 2^20 states should be refused")
    except g.RefusedError:
        pass

    report = g.check_assumptions(g.FactoredMDP.domain("assumption1-violation"))
    assert report["a1_holds"] is False
    psi = g.mismatch_coefficients(chain.with_horizon(5), behavior, behavior)
    assert psi == [1.0] * 4
    bound = g.evaluation_bound(
        dict(eps=0.1, delta1=0.01, horizon=10, n_vars=5, m=1, c2=0.0, c3=0.0,
             psi=[1.0] * 5, n_actions=2, gamma=2)
    )
    assert abs(bound["eps_star"] - 0.5) < 1e-12

    csv_text, summary = g.run_sweep("paper_taxi", trials=1, h_grid=[10])
    assert csv_text.splitlines()[0].startswith("method,domain,H,trial")
    assert len(csv_text.splitlines()) == 6
    assert {c["method"] for c in summary["cells"]} == {"gscope", "ks", "flat", "mfmc", "cis"}

    print(json.dumps({"smoke_test": "ok", "copy_chain_truth": truth, "gscope_estimate": est["estimate"]}))


if __name__ == "__main__":
    main()
