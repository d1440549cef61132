"""Command-line surface tying the pipeline together.

Every command is a thin shell over a library call; outputs are JSON documents
that embed the resolved configuration and sha256 digests of their inputs, so
identical inputs and seeds reproduce byte-identical artifacts.

Exit codes: 0 success, 1 validation/parse error, 2 fit identifiability error.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import sys
from pathlib import Path

import click

from . import __version__
from .analysis import AdvanceReport, HoldoutSpec, advance_sweep
from .dataset import (
    INVERSE_D0,
    INVERSE_DATA,
    MAX_FINETUNE_WEIGHT,
    UNIFORM,
    WeightScheme,
    load_observations,
    save_observations,
)
from .errors import EmergelawError, IdentifiabilityError, ValidationError
from .fitting import (
    EmergencePrediction,
    FitResult,
    GridSpec,
    LawFitConfig,
    fit_emergence_law,
    fit_relu,
    fit_scaling_law,
    grid_digest,
)
from .forms import LOG_POWER, NO_FEWSHOT, POWER, EmergenceLawParams, ExtrapolationConfig, ReluParams, ScalingLawParams, invert_scaling_law
from .report import curve_rows, law_view_of_relu, render_svg, write_curves_csv
from .synth import SynthSpec, generate
from .uncertainty import BOOTSTRAP, MCMC, BootstrapConfig, McmcConfig, bootstrap_fit, mcmc_sample, select_temperature, summarize

_FORMS = {"log-power": LOG_POWER, "power": POWER, "no-fewshot": NO_FEWSHOT}
_WEIGHT_KINDS = {"inverse-data": INVERSE_DATA, "uniform": UNIFORM}
_FEW_SHOT_POLICIES = {"max-finetune": MAX_FINETUNE_WEIGHT, "inverse-d0": INVERSE_D0}


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as handle:
        for block in iter(lambda: handle.read(65536), b""):
            digest.update(block)
    return digest.hexdigest()


def _file_input(path) -> dict:
    return {"path": str(path), "sha256": _sha256(path)}


def _data_input(path, observations) -> dict:
    info = _file_input(path)
    info.update(records=len(observations), task=observations[0].task, loss_basis=observations[0].loss_basis)
    return info


def _write_json(payload: dict, path: Path) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _read_json(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _document(kind: str, config: dict, inputs: dict, body: dict) -> dict:
    return {"document": kind, "generator": f"emergelaw {__version__}", "config": config, "inputs": inputs, **body}


def _grid_config(grid: GridSpec) -> dict:
    payload = dataclasses.asdict(grid)
    payload["digest"] = grid_digest(grid)
    return payload


def _parse_d0(value: str) -> ExtrapolationConfig | None:
    if value == "shots":
        return None
    try:
        return ExtrapolationConfig(int(value))
    except (ValueError, ValidationError) as exc:
        raise click.BadParameter(f"--d0 must be a positive integer or 'shots': {exc}") from exc


def _law_config_from_doc(doc: dict) -> LawFitConfig:
    config = doc["config"]
    grid_fields = {f.name for f in dataclasses.fields(GridSpec)}
    grid = GridSpec(**{k: tuple(v) if isinstance(v, list) else v for k, v in config["grid"].items() if k in grid_fields})
    return LawFitConfig(
        form=config["form"],
        scheme=WeightScheme(**config["scheme"]),
        grid=grid,
        extrap=ExtrapolationConfig(config["d0"]),
    )


def _law_fit_from_doc(doc: dict) -> tuple[LawFitConfig, FitResult, EmergencePrediction]:
    if doc.get("document") != "emergence_law_fit":
        raise ValidationError(f"expected an emergence_law_fit document, got {doc.get('document')!r}")
    config = _law_config_from_doc(doc)
    params = EmergenceLawParams(**doc["fit"]["params"])
    fit = FitResult(
        params=params,
        objective_value=doc["fit"]["objective"],
        seed_rank=doc["fit"]["seed_rank"],
        n_refinements=doc["fit"]["n_refinements"],
        converged=doc["fit"]["converged"],
    )
    pred = doc["prediction"]
    prediction = EmergencePrediction(law=params, d0=pred["d0"], e_hat=pred["e_hat"], loss_basis=pred["loss_basis"])
    return config, fit, prediction


def _fit_body(fit: FitResult) -> dict:
    return {
        "params": dataclasses.asdict(fit.params),
        "objective": fit.objective_value,
        "seed_rank": fit.seed_rank,
        "n_refinements": fit.n_refinements,
        "converged": fit.converged,
    }


@click.group()
@click.version_option(version=__version__)
def cli():
    """Fit emergence laws to checkpoint evaluations and forecast few-shot emergence."""


@cli.command("fit-relu")
@click.option("--data", "data_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(file_okay=False))
@click.option("--top-k", default=1000, show_default=True, help="Grid seeds refined by L-BFGS.")
@click.option("--workers", default=None, type=int, help="Refinement workers (default: EMERGELAW_WORKERS or 1).")
def cmd_fit_relu(data_path, out_path, top_k, workers):
    """Fit the ground-truth emergence ReLU to the few-shot observations."""
    observations = load_observations(data_path)
    grid = GridSpec(top_k=top_k)
    fit = fit_relu(observations, grid=grid, workers=workers)
    out = _out_dir(out_path)
    doc = _document(
        "relu_fit",
        config={"grid": _grid_config(grid), "top_k": top_k},
        inputs={"data": _data_input(data_path, observations)},
        body={"fit": _fit_body(fit)},
    )
    target = out / "relu_fit.json"
    _write_json(doc, target)
    click.echo(f"ground-truth emergence point: {fit.params.elbow:.4f} nats (objective {fit.objective_value:.3e})")
    click.echo(f"wrote {target}")


@cli.command("fit-law")
@click.option("--data", "data_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--form", default="log-power", type=click.Choice(sorted(_FORMS)), show_default=True)
@click.option("--d0", default="shots", show_default=True, help="Low-data limit: an integer or 'shots'.")
@click.option("--weights", default="inverse-data", type=click.Choice(sorted(_WEIGHT_KINDS)), show_default=True)
@click.option("--few-shot-weight", default="max-finetune", type=click.Choice(sorted(_FEW_SHOT_POLICIES)), show_default=True)
@click.option("--top-k", default=1000, show_default=True)
@click.option("--workers", default=None, type=int)
@click.option("--out", "out_path", required=True, type=click.Path(file_okay=False))
def cmd_fit_law(data_path, form, d0, weights, few_shot_weight, top_k, workers, out_path):
    """Fit the emergence law and extrapolate the few-shot emergence point."""
    observations = load_observations(data_path)
    scheme = WeightScheme(kind=_WEIGHT_KINDS[weights], few_shot_policy=_FEW_SHOT_POLICIES[few_shot_weight])
    grid = GridSpec(top_k=top_k)
    extrap = _parse_d0(d0)
    fit, prediction = fit_emergence_law(
        observations, form=_FORMS[form], scheme=scheme, grid=grid, extrap=extrap, workers=workers
    )
    out = _out_dir(out_path)
    doc = _document(
        "emergence_law_fit",
        config={
            "form": _FORMS[form],
            "scheme": dataclasses.asdict(scheme),
            "grid": _grid_config(grid),
            "top_k": top_k,
            "d0": prediction.d0,
        },
        inputs={"data": _data_input(data_path, observations)},
        body={
            "fit": _fit_body(fit),
            "prediction": {"d0": prediction.d0, "e_hat": prediction.e_hat, "loss_basis": prediction.loss_basis},
        },
    )
    target = out / "law_fit.json"
    _write_json(doc, target)
    click.echo(f"predicted few-shot emergence: {prediction.e_hat:.4f} nats (objective {fit.objective_value:.3e})")
    click.echo(f"wrote {target}")


@cli.command("uncertainty")
@click.option("--fit", "fit_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--data", "data_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--method", required=True, type=click.Choice([BOOTSTRAP, MCMC]))
@click.option("--replicates", default=1000, show_default=True, help="Bootstrap replicates.")
@click.option("--replicate-top-k", default=200, show_default=True, help="Seeds refined per bootstrap replicate.")
@click.option("--samples", default=25000, show_default=True, help="MCMC samples per chain.")
@click.option("--chains", default=4, show_default=True)
@click.option("--warmup", default=15000, show_default=True)
@click.option("--temperature", default=None, type=float, help="Skip the temperature sweep and use this value.")
@click.option("--seed", default=0, show_default=True)
@click.option("--workers", default=None, type=int)
@click.option("--out", "out_path", required=True, type=click.Path(file_okay=False))
def cmd_uncertainty(
    fit_path, data_path, method, replicates, replicate_top_k, samples, chains, warmup, temperature, seed, workers, out_path
):
    """Bootstrap or MCMC uncertainty over the predicted emergence point."""
    config, mle, _ = _law_fit_from_doc(_read_json(fit_path))
    observations = load_observations(data_path)
    run_config: dict = {"method": method, "seed": seed, "fit_config": _read_json(fit_path)["config"]}

    if method == BOOTSTRAP:
        problem = config.problem(observations)
        bcfg = BootstrapConfig(replicates=replicates, seed=seed)
        summary = bootstrap_fit(
            list(problem.included), problem.data.weights, config, bcfg, replicate_top_k=replicate_top_k, workers=workers
        )
        run_config.update(replicates=replicates, replicate_top_k=replicate_top_k)
    else:
        mcfg = McmcConfig(chains=chains, samples_per_chain=samples, warmup=warmup, seed=seed)
        chosen = temperature if temperature is not None else select_temperature(observations, mle, mcfg, config)
        summary = mcmc_sample(observations, mle, mcfg, chosen, config, workers=workers)
        run_config.update(chains=chains, samples_per_chain=samples, warmup=warmup, temperature=chosen)

    out = _out_dir(out_path)
    samples_file = out / "uncertainty_samples.txt"
    samples_file.write_text("".join(f"{value!r}\n" for value in summary.samples), encoding="utf-8")
    doc = _document(
        "uncertainty",
        config=run_config,
        inputs={"data": _data_input(data_path, observations), "fit": _file_input(fit_path)},
        body={
            "summary": {
                "method": summary.method,
                "percentiles": {str(k): v for k, v in summary.percentiles.items()},
                "n_samples": len(summary.samples),
                "n_excluded": summary.n_excluded,
                "diagnostics": summary.diagnostics,
            },
            "samples_file": samples_file.name,
        },
    )
    target = out / "uncertainty.json"
    _write_json(doc, target)
    p = summary.percentiles
    click.echo(f"{method} p5={p[5]:.4f} p50={p[50]:.4f} p95={p[95]:.4f} (n={len(summary.samples)}, excluded={summary.n_excluded})")
    click.echo(f"wrote {target}")


def _parse_holdouts(path) -> list[HoldoutSpec]:
    raw = _read_json(path)
    if not isinstance(raw, list):
        raise ValidationError("holdout file must be a JSON array of specs")
    return [HoldoutSpec(kind=item["kind"], n=item.get("n", 0), parity=item.get("parity")) for item in raw]


def _sweep_rows_payload(report: AdvanceReport) -> list[dict]:
    rows = []
    for row in report.rows:
        score = row.score
        rows.append(
            {
                "spec": row.spec.label(),
                "flops_used": row.flops_used,
                "e_hat": score.e_hat if score else None,
                "abs_error": score.abs_error if score else None,
                "success": score.success if score else None,
                "p5": score.error_interval[0] if score and score.error_interval else None,
                "p95": score.error_interval[1] if score and score.error_interval else None,
                "note": row.note,
            }
        )
    return rows


@cli.command("sweep")
@click.option("--data", "data_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--gt", default=None, type=float, help="Ground-truth emergence point; defaults to a ReLU fit on the data.")
@click.option("--holdouts", "holdouts_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--form", default="log-power", type=click.Choice(sorted(_FORMS)), show_default=True)
@click.option("--d0", default="shots", show_default=True)
@click.option("--weights", default="inverse-data", type=click.Choice(sorted(_WEIGHT_KINDS)), show_default=True)
@click.option("--top-k", default=1000, show_default=True)
@click.option("--workers", default=None, type=int)
@click.option("--out", "out_path", required=True, type=click.Path(file_okay=False))
def cmd_sweep(data_path, gt, holdouts_path, form, d0, weights, top_k, workers, out_path):
    """Holdout sweep: how far in advance (in FLOPs) emergence is predicted."""
    observations = load_observations(data_path)
    specs = _parse_holdouts(holdouts_path)
    grid = GridSpec(top_k=top_k)
    if gt is None:
        gt = fit_relu(observations, grid=grid, workers=workers).params.elbow
    config = LawFitConfig(
        form=_FORMS[form], scheme=WeightScheme(kind=_WEIGHT_KINDS[weights]), grid=grid, extrap=_parse_d0(d0)
    )
    report = advance_sweep(observations, gt, specs, config, workers=workers)

    out = _out_dir(out_path)
    csv_path = out / "sweep.csv"
    with csv_path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["spec", "flops_used", "e_hat", "abs_error", "success", "p5", "p95"])
        for row in _sweep_rows_payload(report):
            writer.writerow(
                [
                    row["spec"],
                    row["flops_used"],
                    "" if row["e_hat"] is None else row["e_hat"],
                    "" if row["abs_error"] is None else row["abs_error"],
                    "" if row["success"] is None else str(row["success"]).lower(),
                    "" if row["p5"] is None else row["p5"],
                    "" if row["p95"] is None else row["p95"],
                ]
            )
    doc = _document(
        "advance_sweep",
        config={
            "gt": gt,
            "form": _FORMS[form],
            "weights": _WEIGHT_KINDS[weights],
            "d0": d0,
            "grid": _grid_config(grid),
            "top_k": top_k,
        },
        inputs={"data": _data_input(data_path, observations), "holdouts": _file_input(holdouts_path)},
        body={
            "report": {
                "rows": _sweep_rows_payload(report),
                "flops_first_emerged": report.flops_first_emerged,
                "advance_multiplier": report.advance_multiplier,
            }
        },
    )
    target = out / "sweep.json"
    _write_json(doc, target)
    if report.advance_multiplier is not None:
        click.echo(f"advance multiplier: {report.advance_multiplier:.2f}x")
    else:
        click.echo("advance multiplier: undefined (no successful prediction or no post-emergence checkpoint)")
    click.echo(f"wrote {csv_path} and {target}")


@cli.group("scaling-law")
def scaling_law():
    """Fit the loss-vs-parameters law or invert it at a target loss."""


def _load_points(path) -> list[tuple[float, float]]:
    with Path(path).open("r", encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None or not {"n_b", "loss"} <= set(reader.fieldnames):
            raise ValidationError("points file needs CSV columns n_b,loss")
        try:
            return [(float(row["n_b"]), float(row["loss"])) for row in reader]
        except (TypeError, KeyError, ValueError) as exc:
            raise ValidationError(f"malformed points file: {exc}") from exc


@scaling_law.command("fit")
@click.option("--points", "points_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--top-k", default=1000, show_default=True)
@click.option("--workers", default=None, type=int)
@click.option("--out", "out_path", required=True, type=click.Path(file_okay=False))
def cmd_scaling_fit(points_path, top_k, workers, out_path):
    """Fit loss(n) = amplitude / n**exponent + irreducible (log-space MSE)."""
    points = _load_points(points_path)
    fit = fit_scaling_law(points, top_k=top_k, workers=workers)
    out = _out_dir(out_path)
    doc = _document(
        "scaling_law_fit",
        config={"top_k": top_k},
        inputs={"points": _file_input(points_path)},
        body={"fit": _fit_body(fit), "points": [{"n_b": n, "loss": loss} for n, loss in points]},
    )
    target = out / "scaling_law.json"
    _write_json(doc, target)
    p = fit.params
    click.echo(
        f"loss(n) = {p.amplitude:.4f} / n^{p.exponent:.4f} + {p.irreducible:.4f} (log-space MSE {fit.objective_value:.3e})"
    )
    click.echo(f"wrote {target}")


@scaling_law.command("invert")
@click.option("--fit", "fit_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--loss", required=True, type=float, help="Target loss in nats.")
@click.option("--out", "out_path", default=None, type=click.Path(file_okay=False))
def cmd_scaling_invert(fit_path, loss, out_path):
    """Parameter count (billions) at which the fitted law reaches --loss."""
    doc = _read_json(fit_path)
    if doc.get("document") != "scaling_law_fit":
        raise ValidationError(f"expected a scaling_law_fit document, got {doc.get('document')!r}")
    params = ScalingLawParams(**doc["fit"]["params"])
    count = invert_scaling_law(params, loss)
    click.echo(f"{count:.6g}")
    if out_path is not None:
        out = _out_dir(out_path)
        inversion = _document(
            "scaling_law_inversion",
            config={"loss": loss},
            inputs={"fit": _file_input(fit_path)},
            body={"params_b": count},
        )
        _write_json(inversion, out / "inversion.json")


@cli.command("synth")
@click.option("--spec", "spec_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def cmd_synth(spec_path, out_path):
    """Generate a synthetic observation file from a truth spec."""
    raw = _read_json(spec_path)
    try:
        truth = EmergenceLawParams(**raw["truth"])
        spec = SynthSpec(
            truth=truth,
            loss_grid=tuple(raw["loss_grid"]),
            data_amounts=tuple(raw["data_amounts"]),
            replicates_per_amount=raw["replicates_per_amount"],
            few_shot_losses=tuple(raw["few_shot_losses"]),
            d0=raw["d0"],
            noise_sigma=raw["noise_sigma"],
            seed=raw["seed"],
            noise_model=raw.get("noise_model", "gaussian"),
            eval_samples=raw.get("eval_samples"),
            task=raw.get("task", "synthetic"),
            loss_basis=raw.get("loss_basis", "pretrain"),
        )
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed synth spec: {exc}") from exc
    observations = generate(spec)
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_observations(observations, out)
    meta = _document("synth_run", config=raw, inputs={"spec": _file_input(spec_path)}, body={"records": len(observations)})
    _write_json(meta, Path(str(out) + ".meta.json"))
    click.echo(f"wrote {len(observations)} observations to {out}")


@cli.command("report")
@click.option("--fit", "fit_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--data", "data_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--uncertainty", "uncertainty_path", default=None, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(file_okay=False))
def cmd_report(fit_path, data_path, uncertainty_path, out_path):
    """Render the fitted curves (SVG + CSV), optionally with a CDF panel."""
    doc = _read_json(fit_path)
    observations = load_observations(data_path)
    if doc.get("document") == "emergence_law_fit":
        law = EmergenceLawParams(**doc["fit"]["params"])
        d0 = doc["prediction"]["d0"]
        e_hat = doc["prediction"]["e_hat"]
        title = f"emergence-law fit ({observations[0].task}): e_hat={e_hat:.3f} nats"
    elif doc.get("document") == "relu_fit":
        relu = ReluParams(**doc["fit"]["params"])
        law, d0, e_hat = law_view_of_relu(relu), 1, relu.elbow
        title = f"ground-truth ReLU fit ({observations[0].task}): elbow={e_hat:.3f} nats"
    else:
        raise ValidationError(f"cannot render document kind {doc.get('document')!r}")

    summary = None
    if uncertainty_path is not None:
        udoc = _read_json(uncertainty_path)
        samples_file = Path(uncertainty_path).parent / udoc["samples_file"]
        values = [float(line) for line in samples_file.read_text(encoding="utf-8").split()]
        summary = summarize(values, method=udoc["summary"]["method"])

    out = _out_dir(out_path)
    rows = curve_rows(law, d0, observations)
    csv_path = out / "curves.csv"
    svg_path = out / "report.svg"
    write_curves_csv(rows, csv_path)
    render_svg(observations, rows, e_hat, svg_path, uncertainty=summary, title=title)
    click.echo(f"wrote {svg_path} and {csv_path}")


def main(argv=None) -> int:
    """Run the CLI, mapping library errors to the documented exit codes."""
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.ClickException as exc:
        exc.show()
        return 1
    except click.Abort:
        click.echo("aborted", err=True)
        return 1
    except IdentifiabilityError as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    except (ValidationError, EmergelawError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 1


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
