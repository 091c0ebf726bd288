import hashlib
import json
from pathlib import Path

import pandas as pd
import pytest

from apps.runner.adapters import ScriptedBackend
from apps.runner.jobs.batch import (
    compare,
    dump_tree,
    eval_predictions,
    load_predictions,
    resume,
    run_batch,
    select_examples,
)
from apps.runner.main import EXIT_CONFIG, EXIT_OK, EXIT_PARTIAL, main
from packages.core.errors import PreconditionError, RunDigestMismatchError, RunMismatchError
from packages.core.models import Dataset, ErrorCategory
from packages.core.run_config import build_config
from packages.core.storage.run_store import MANIFEST_FILE, RunStore

FIXTURES = Path(__file__).parent / "fixtures"
HOTPOT = FIXTURES / "hotpot_sample.json"
SCRIPT = FIXTURES / "scripted_hotpot.json"

FIG1 = "fig1-two-hop"
CORLISS = "5a8c7595554299585d9e36b6"
OBEROI = "5a879ab05542996e4f30887e"


def vanilla_config(tmp_path, **overrides):
    values = {
        "dataset_path": str(HOTPOT),
        "strategy": "vanilla",
        "backend": "scripted",
        "fixtures_path": str(SCRIPT),
        "sample_n": 5,
        "concurrency": 2,
        "output_dir": str(tmp_path / "runs"),
    }
    values.update(overrides)
    return build_config(values)


def snapshot(run_dir):
    return {
        p.relative_to(run_dir).as_posix(): p.read_bytes()
        for p in sorted(Path(run_dir).rglob("*"))
        if p.is_file()
    }


def partial_backend(missing_pattern):
    full = ScriptedBackend.from_file(SCRIPT)
    return ScriptedBackend(rules=[r for r in full.rules if missing_pattern not in r.pattern.pattern])


def test_select_examples_full_sample(tmp_path):
    config = vanilla_config(tmp_path)
    assert select_examples(config).ids[0] == FIG1
    assert len(select_examples(vanilla_config(tmp_path, sample_n="all"))) == 5
    assert len(select_examples(vanilla_config(tmp_path, sample_n=3, seed=0))) == 3


@pytest.mark.asyncio
async def test_vanilla_run_report(tmp_path):
    result = await run_batch(vanilla_config(tmp_path))

    assert result.report.n == 5
    assert result.report.em == pytest.approx(60.0)
    assert result.report.f1 == pytest.approx((3 + 2 / 3) / 5 * 100)
    assert result.exit_code == 0
    assert [r.example_id for r in result.records][0] == FIG1

    by_id = {r.example_id: r for r in result.records}
    assert by_id[CORLISS].error_category == ErrorCategory.WRONG_ANSWER
    assert by_id[OBEROI].error_category == ErrorCategory.SEMANTICALLY_CORRECT

    store = RunStore(result.run_dir)
    manifest = store.load_manifest()
    assert "records.jsonl" in manifest.files
    assert "report.txt" in manifest.files
    assert f"traces/{FIG1}.json" in manifest.files
    for name, digest in manifest.files.items():
        assert hashlib.sha256(store.path(name).read_bytes()).hexdigest() == digest, name
    assert list(manifest.fixture_digests) == ["scripted_hotpot.json"]
    assert result.run_dir.name == vanilla_config(tmp_path).digest()[:16]


@pytest.mark.asyncio
async def test_rerun_is_byte_identical(tmp_path):
    config = vanilla_config(tmp_path)
    first = await run_batch(config)
    before = snapshot(first.run_dir)

    second = await run_batch(config)

    assert second.run_dir == first.run_dir
    assert snapshot(second.run_dir) == before


@pytest.mark.asyncio
async def test_concurrency_does_not_change_results(tmp_path):
    one = await run_batch(vanilla_config(tmp_path, concurrency=1, output_dir=str(tmp_path / "a")))
    many = await run_batch(vanilla_config(tmp_path, concurrency=8, output_dir=str(tmp_path / "b")))

    assert one.records == many.records


@pytest.mark.asyncio
async def test_failed_examples_set_exit_code(tmp_path):
    result = await run_batch(vanilla_config(tmp_path), backend=partial_backend("The Oberoi family"))

    assert result.failed_ids == [OBEROI]
    assert result.exit_code == 1
    by_id = {r.example_id: r for r in result.records}
    assert by_id[OBEROI].error_category == ErrorCategory.NO_ANSWER


@pytest.mark.asyncio
async def test_resume_runs_only_missing_and_failed(tmp_path):
    config = vanilla_config(tmp_path)
    interrupted = await run_batch(config, backend=partial_backend("The Oberoi family"))
    store = RunStore(interrupted.run_dir)
    store.outcome_path(FIG1).unlink()

    backend = ScriptedBackend.from_file(SCRIPT)
    resumed = await resume(interrupted.run_dir, backend=backend)

    assert resumed.executed == [FIG1, OBEROI]
    assert len(resumed.skipped) == 3
    assert backend.calls == 2
    assert resumed.report.em == pytest.approx(60.0)
    assert resumed.exit_code == 0

    fresh = await run_batch(vanilla_config(tmp_path, output_dir=str(tmp_path / "fresh")))
    assert (store.path("records.jsonl").read_bytes()
            == RunStore(fresh.run_dir).path("records.jsonl").read_bytes())


@pytest.mark.asyncio
async def test_tampered_manifest_is_refused(tmp_path):
    result = await run_batch(vanilla_config(tmp_path))
    manifest_path = RunStore(result.run_dir).path(MANIFEST_FILE)
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    manifest["config_digest"] = "0" * 64
    manifest_path.write_text(json.dumps(manifest), encoding="utf-8")

    with pytest.raises(RunDigestMismatchError):
        await resume(result.run_dir)
    with pytest.raises(RunDigestMismatchError):
        await run_batch(vanilla_config(tmp_path))


@pytest.mark.asyncio
async def test_compare_runs(tmp_path):
    base = await run_batch(vanilla_config(tmp_path))
    other = await run_batch(vanilla_config(tmp_path, seed=1))
    subset = await run_batch(vanilla_config(tmp_path, sample_n=3))

    frame = compare([base.run_dir, other.run_dir])
    assert isinstance(frame, pd.DataFrame)
    assert list(frame["run"]) == [base.run_dir.name, other.run_dir.name]
    assert frame.loc[1, "dEM"] == 0.0

    with pytest.raises(RunMismatchError):
        compare([base.run_dir, subset.run_dir])
    with pytest.raises(PreconditionError):
        compare([base.run_dir])


@pytest.mark.asyncio
async def test_dump_tree(tmp_path):
    raw = json.loads(HOTPOT.read_text(encoding="utf-8"))
    one = tmp_path / "fig1.json"
    one.write_text(json.dumps(raw[:1]), encoding="utf-8")
    config = vanilla_config(tmp_path, dataset_path=str(one), strategy="stoctot", sample_n="all")

    result = await run_batch(config)
    payload = json.loads(dump_tree(result.run_dir, FIG1))

    assert result.report.em == 100.0
    assert payload["chosen_leaf"] == 3
    assert payload["chosen_path"] == [0, 1, 3]
    assert payload["backend_calls"] == 13
    assert result.records[0].backend_calls == 13
    with pytest.raises(PreconditionError):
        dump_tree(result.run_dir, "not-an-example")


def test_eval_predictions(tmp_path):
    predictions = tmp_path / "pred.json"
    predictions.write_text(json.dumps({"answer": {FIG1: "Rush Hour", OBEROI: "Delhi", "stray-id": "x"}}), encoding="utf-8")

    report, records = eval_predictions(HOTPOT, Dataset.HOTPOTQA, predictions)

    assert report.n == 5
    assert report.em == pytest.approx(40.0)
    assert report.error_counts["no_answer"] == 3
    assert [r.example_id for r in records][0] == FIG1


def test_load_predictions_flat(tmp_path):
    path = tmp_path / "pred.json"
    path.write_text(json.dumps({FIG1: "Rush Hour", OBEROI: None}), encoding="utf-8")
    assert load_predictions(path) == {FIG1: "Rush Hour", OBEROI: ""}


# --- command line ----------------------------------------------------------------

def _run_args(tmp_path, *extra):
    return [
        "run",
        "--dataset-path", str(HOTPOT),
        "--strategy", "vanilla",
        "--backend", "scripted",
        "--fixtures-path", str(SCRIPT),
        "--sample-n", "5",
        "--output-dir", str(tmp_path / "runs"),
        *extra,
    ]


def test_cli_run_ok(tmp_path, capsys):
    assert main(_run_args(tmp_path)) == EXIT_OK
    out = capsys.readouterr().out
    assert "overall" in out
    assert "run directory:" in out


def test_cli_run_with_failures(tmp_path):
    script = tmp_path / "partial.json"
    payload = json.loads(SCRIPT.read_text(encoding="utf-8"))
    payload["rules"] = [r for r in payload["rules"] if "Oberoi" not in r["pattern"]]
    script.write_text(json.dumps(payload), encoding="utf-8")

    args = _run_args(tmp_path)
    args[args.index(str(SCRIPT))] = str(script)
    assert main(args) == EXIT_PARTIAL


def test_cli_hard_mode_needs_local_backend(tmp_path):
    args = ["run", "--dataset-path", str(HOTPOT), "--constraint-mode", "hard", "--backend", "http"]
    assert main(args) == EXIT_CONFIG


def test_cli_sample_too_large(tmp_path):
    assert main(_run_args(tmp_path, "--sample_n", "6")) == EXIT_CONFIG


def test_cli_compare_single_run(tmp_path):
    assert main(["compare", str(tmp_path)]) == EXIT_CONFIG


def test_cli_resume_and_compare(tmp_path, capsys):
    assert main(_run_args(tmp_path)) == EXIT_OK
    assert main(_run_args(tmp_path, "--seed", "3")) == EXIT_OK
    run_dirs = sorted(str(p) for p in (tmp_path / "runs").iterdir())

    assert main(["resume", run_dirs[0]]) == EXIT_OK
    csv_path = tmp_path / "cmp.csv"
    assert main(["compare", *run_dirs, "--csv", str(csv_path)]) == EXIT_OK
    assert csv_path.read_text(encoding="utf-8").startswith("run,strategy,n,EM,F1")


def test_cli_eval_and_dump_tree_errors(tmp_path):
    predictions = tmp_path / "pred.json"
    predictions.write_text(json.dumps({FIG1: "Rush Hour"}), encoding="utf-8")
    assert main(["eval", "--dataset-path", str(HOTPOT), "--predictions", str(predictions)]) == EXIT_OK
    assert main(["dump-tree", FIG1, "--run-dir", str(tmp_path)]) == EXIT_CONFIG
