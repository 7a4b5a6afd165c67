import json

import numpy as np
import pytest
import yaml

from aif_arm.experiments import cli
from aif_arm.experiments.config import SCENARIOS, Scenario, load_scenario, scenario_from_dict, scenario_to_dict
from aif_arm.experiments.logs import read_trial_csv, summarize, summarize_dir, write_run
from aif_arm.experiments.presets import PRESETS, preset, preset_dict
from aif_arm.experiments.runner import TrialRecord, run_scenario, run_self_trial, setup_trial
from aif_arm.errors import ScenarioError
from aif_arm.genmodel import GprModel
from aif_arm.simulator import JUPITER_GRAVITY


def quiet(**kw):
    """Noise-free single-trial scenario for exact checks."""
    base = {"world": {"noise": {"proprio_pos": 0.0, "proprio_vel": 0.0, "visual": 0.0}}}
    base.update(kw)
    return scenario_from_dict(base)


# --- configuration --------------------------------------------------------------


def test_every_scenario_has_a_valid_preset():
    assert set(PRESETS) == set(SCENARIOS)
    for name in SCENARIOS:
        assert preset(name).name == name


def test_unknown_keys_are_rejected():
    with pytest.raises(ScenarioError, match="colour"):
        scenario_from_dict({"name": "reaching", "colour": "red"})
    with pytest.raises(ScenarioError, match="agent: unknown key.*k_q"):
        scenario_from_dict({"name": "reaching", "agent": {"k_q": 1.0}})


@pytest.mark.parametrize(
    "bad",
    [
        {"name": "flying"},
        {"name": "reaching", "trials": 0},
        {"name": "reaching", "duration": 0},
        {"name": "reaching", "trials": "ten"},
        {"name": "reaching", "agent": {"dt": True}},
        {"name": "reaching", "prior_level": 4},
        {"name": "jupiter"},
        {"name": "reaching", "agent": {"max_order": 2}},
    ],
)
def test_invalid_scenarios(bad):
    with pytest.raises(ScenarioError):
        scenario_from_dict(bad)


def test_yaml_roundtrip(tmp_path):
    scn = preset("jupiter")
    path = tmp_path / "jupiter.yaml"
    path.write_text(yaml.safe_dump(scenario_to_dict(scn)))
    assert load_scenario(path) == scn


def test_int_promotes_to_float():
    scn = scenario_from_dict({"name": "reaching", "agent": {"k_a": 3}})
    assert isinstance(scn.agent.k_a, float)


# --- runner -------------------------------------------------------------------------


def test_estimation_fixed_point_is_exact():
    scn = quiet(name="estimation-noise", trials=3, duration=200, prior_level=0)
    for rec in run_scenario(scn):
        assert rec.summary["final_joint_err_rad"] < 1e-9
        assert not np.any(rec.array("action"))


def test_reaching_goal_at_current_pose_never_acts():
    scn = quiet(name="reaching", trials=2, duration=200, goal={"kind": "current"})
    for rec in run_scenario(scn):
        assert not np.any(rec.array("action"))


def test_row_count_and_columns():
    scn = preset("broken-sensor", trials=1, duration=350)
    (rec,) = run_scenario(scn)
    assert len(rec.rows) == 350
    assert rec.columns() == [
        "step", "t", "z0_est_0", "z0_est_1", "q_true_0", "q_true_1",
        "action_0", "action_1", "vfe", "e_proprio", "e_visual", "perturb_active",
    ]
    e_vis = rec.array("e_visual")
    assert np.all(np.isfinite(e_vis[:300])) and np.all(np.isnan(e_vis[300:]))
    assert rec.array("perturb_active")[299] == 0 and rec.array("perturb_active")[300] == 1


def test_summary_derivable_from_rows():
    scn = preset("estimation-noise", trials=2)
    for rec in run_scenario(scn):
        err = np.linalg.norm(rec.array("z0_est")[-1] - rec.array("q_true")[-1])
        assert rec.summary["final_joint_err_rad"] == pytest.approx(err)
        assert rec.summary["vfe_final"] == rec.array("vfe")[-1]


def test_jupiter_runs_both_gravities_with_identical_agents():
    scn = preset("jupiter", trials=1, duration=20)
    earth, jupiter = (setup_trial(scn, 0, gravity=g) for g in (scn.world.gravity, JUPITER_GRAVITY))
    assert jupiter.world.gravity == 24.79
    assert earth.config == jupiter.config
    np.testing.assert_array_equal(earth.world.q, jupiter.world.q)
    recs = run_scenario(scn)
    assert [r.variant for r in recs] == ["g=9.81", "g=24.79"]


def test_estimation_disables_action():
    assert setup_trial(preset("estimation-noise"), 0).config.k_a == 0.0


def test_broken_sensor_keeps_estimate():
    scn = preset("broken-sensor", trials=3)
    for rec in run_scenario(scn):
        est = np.linalg.norm(rec.array("z0_est") - rec.array("q_true"), axis=1)
        assert est[300:].mean() < 3 * est[200:300].mean()


def test_visual_shift_drives_compensation():
    scn = preset("visual-shift-adaptation", trials=5)
    for rec in run_scenario(scn):
        setup = setup_trial(scn, rec.index)
        q = rec.array("q_true")
        dx = setup.fk.predict(q[299])[0] - setup.fk.predict(q[199])[0]
        assert dx < 0


def test_self_trials_separate():
    scn = preset("self-recognition")
    own = run_self_trial(scn, 0, "self").summary["window_mean_vfe"]
    other = run_self_trial(scn, 0, "other").summary["window_mean_vfe"]
    assert own < other


def test_gpr_visual_model_runs(tmp_path):
    scn = scenario_from_dict(
        {**preset_dict("reaching"), "trials": 1, "duration": 50, "agent": {**preset_dict("reaching")["agent"], "visual_model": "gpr"}}
    )
    setup = setup_trial(scn, 0)
    assert isinstance(setup.models.sensory, GprModel)
    run_scenario(scn)


def test_parallel_matches_serial():
    scn = preset("estimation-noise", trials=3, duration=50)
    a = run_scenario(scn, jobs=1)
    b = run_scenario(scn, jobs=2)
    assert [r.rows for r in a] == [r.rows for r in b]


# --- logs -----------------------------------------------------------------------------


def _record(err, vfe=(1.0, 0.5)):
    rec = TrialRecord(index=0, n_joints=1)
    rec.rows = [[i, 0.0, 0.0, 0.0, 0.0, v, 0.0, None, 0] for i, v in enumerate(vfe)]
    rec.summary = {"final_joint_err_rad": err, "final_ee_err_m": 0.0, "converged": True, "vfe_final": vfe[-1], "mean_tracking_err_rad": err}
    return rec


def test_summary_examples():
    one = summarize([_record(0.02)])
    assert one["mean_final_joint_err_rad"] == pytest.approx(0.02)
    assert one["std_final_joint_err_rad"] == 0.0
    two = summarize([_record(0.02), _record(0.04, (3.0, 1.5))])
    assert two["mean_final_joint_err_rad"] == pytest.approx(0.03)
    assert two["mean_vfe_trajectory"] == [2.0, 1.0]
    assert two["convergence_rate"] == 1.0
    with pytest.raises(ValueError):
        summarize([])


def test_write_and_resummarize(tmp_path):
    scn = preset("estimation-noise", trials=2, duration=30)
    records = run_scenario(scn)
    summary = write_run(records, tmp_path, scn.name)
    for key in ("scenario", "trials", "converged", "mean_final_joint_err_rad", "std_final_joint_err_rad", "mean_final_ee_err_m", "mean_vfe_final"):
        assert key in summary
    assert json.loads((tmp_path / "summary.json").read_text()) == summary
    assert summarize_dir(tmp_path) == summary
    header, rows = read_trial_csv(tmp_path / "trial_0000.csv")
    assert header[:3] == ["step", "t", "z0_est_0"] and len(rows) == 30


# --- CLI ------------------------------------------------------------------------------


def _run_cli(tmp_path, name, *extra):
    out = tmp_path / name
    code = cli.main(["run", "--scenario", "estimation-noise", "--out", str(out), "--trials", "2", "--quiet", *extra])
    assert code == 0
    return out


def test_cli_run_is_deterministic(tmp_path):
    a = _run_cli(tmp_path, "a", "--seed", "7")
    b = _run_cli(tmp_path, "b", "--seed", "7")
    for f in sorted(a.glob("*.csv")):
        assert f.read_bytes() == (b / f.name).read_bytes()
    c = _run_cli(tmp_path, "c", "--seed", "8")
    assert (a / "trial_0000.csv").read_bytes() != (c / "trial_0000.csv").read_bytes()


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_cli_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("name: reaching\nbogus: 1\n")
    assert cli.main(["run", "--scenario", str(bad), "--out", str(tmp_path / "x")]) == 1
    assert cli.main(["run", "--scenario", "no-such-thing", "--out", str(tmp_path / "x")]) == 1
    assert cli.main(["summarize", str(tmp_path / "missing")]) == 1

    blow = tmp_path / "blow.yaml"
    blow.write_text(yaml.safe_dump({"name": "reaching", "duration": 50, "goal": {"kind": "random"}, "agent": {"k_z": 1e6, "dt": 0.1}}))
    assert cli.main(["run", "--scenario", str(blow), "--out", str(tmp_path / "y"), "--quiet"]) == 2


def test_cli_summarize_and_preset(tmp_path, capsys):
    out = _run_cli(tmp_path, "s")
    capsys.readouterr()
    assert cli.main(["summarize", str(out)]) == 0
    assert json.loads(capsys.readouterr().out)["trials"] == 2
    assert cli.main(["preset", "reaching", "--out", str(tmp_path / "r.yaml")]) == 0
    assert load_scenario(tmp_path / "r.yaml") == preset("reaching")


def test_cli_fit_gpr(tmp_path):
    path = tmp_path / "gpr.json"
    assert cli.main(["fit-gpr", "--samples", "50", "--out", str(path), "--quiet"]) == 0
    model = GprModel.load(path)
    assert model.X.shape == (50, 2)
    assert cli.main(["fit-gpr", "--samples", "0", "--out", str(path)]) == 1


def test_scenario_defaults():
    scn = Scenario(name="reaching")
    assert scn.validate() is scn
