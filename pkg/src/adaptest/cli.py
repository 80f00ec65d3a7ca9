"""Operator command line: bank tooling, simulation studies, calibration,
evaluation models, the HTTP service, and transcript replay.

Exit codes: 0 success, 1 runtime error, 2 validation error, 64 usage error.
Stochastic subcommands require an explicit --seed so reruns are byte-identical.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import engine
from . import evalmodels as ev
from . import mcmc as mc
from . import simulate as sim
from .bank import (
    BankValidationError,
    ItemBank,
    SynthSpec,
    load_bank,
    save_bank,
    synth_bank,
    validate_bank,
)
from .calibration import feature_correlations, fit_2pl, load_response_matrix

__all__ = ["main"]

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_VALIDATION = 2
EXIT_USAGE = 64


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # unknown flags and malformed values
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        sys.exit(EXIT_USAGE)


class ValidationFailure(Exception):
    pass


def _write_text(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _write_json(data: dict, out: str | None) -> None:
    _write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", out)


def _parse_lengths(spec: str) -> list[int]:
    if ":" in spec:
        parts = [int(p) for p in spec.split(":")]
        if len(parts) == 2:
            lo, hi, step = parts[0], parts[1], 1
        elif len(parts) == 3:
            lo, hi, step = parts
        else:
            raise ValidationFailure(f"bad length range: {spec}")
        return list(range(lo, hi + 1, step))
    return [int(p) for p in spec.split(",")]


def _mcmc_config(args: argparse.Namespace) -> mc.McmcConfig:
    return mc.McmcConfig(
        n_chains=args.chains,
        n_iterations=args.iterations,
        n_warmup=args.warmup,
        thin=args.thin,
        seed=args.seed,
    )


def _add_mcmc_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--chains", type=int, default=4)
    parser.add_argument("--iterations", type=int, default=20_000)
    parser.add_argument("--warmup", type=int, default=10_000)
    parser.add_argument("--thin", type=int, default=5)


def _load_bank_checked(path: str, lenient: bool = False) -> ItemBank:
    try:
        return load_bank(path, lenient=lenient)
    except FileNotFoundError as exc:
        raise ValidationFailure(f"bank file not found: {path}") from exc
    except BankValidationError as exc:
        raise ValidationFailure(f"invalid bank: {exc}") from exc


def _cmd_bank_synth(args) -> int:
    spec = (
        SynthSpec.calvi_like() if args.family == "calvi" else SynthSpec.vlat_like()
    )
    bank = synth_bank(args.seed, spec)
    save_bank(bank, args.out)
    sys.stdout.write(
        f"{bank.bank_id}: {len(bank.scored_items())} scored + "
        f"{len(bank.unscored_items())} unscored items -> {args.out}\n"
    )
    return EXIT_OK


def _cmd_bank_validate(args) -> int:
    try:
        bank = load_bank(args.bank, lenient=args.lenient)
        violations = validate_bank(bank)
    except BankValidationError as exc:
        violations = exc.violations
    except FileNotFoundError:
        raise ValidationFailure(f"bank file not found: {args.bank}")
    _write_json({"violations": violations}, args.out)
    return EXIT_VALIDATION if violations else EXIT_OK


def _cmd_simulate_sweep(args) -> int:
    bank = _load_bank_checked(args.bank)
    lengths = _parse_lengths(args.lengths)
    persons = sim.draw_persons(
        args.persons, bank.theta_prior[0], bank.theta_prior[1], args.seed
    )
    try:
        result = sim.sweep_lengths(bank, lengths, persons, baseline=args.baseline)
    except ValueError as exc:
        raise ValidationFailure(str(exc))
    out = Path(args.out)
    result.to_csv(out)
    result.to_summary_json(out.with_suffix(".summary.json"))
    written = [str(out), str(out.with_suffix(".summary.json"))]
    if not args.no_figure:
        from .figures import sweep_figure

        sweep_figure(result, out.with_suffix(".png"))
        written.append(str(out.with_suffix(".png")))
    sys.stdout.write("wrote " + ", ".join(written) + "\n")
    return EXIT_OK


def _cmd_simulate_recovery(args) -> int:
    bank = _load_bank_checked(args.bank)
    persons = sim.draw_persons(
        args.persons, bank.theta_prior[0], bank.theta_prior[1], args.seed
    )
    length = args.scored_length or bank.coverage_minimum()
    config = engine.SessionConfig(
        scored_length=length,
        covering_dimensions=tuple(bank.covering_dimensions),
        rng_seed=args.seed,
    )
    result = sim.recovery_analysis(bank, config, persons, rule=args.rule)
    out = Path(args.out)
    result.to_csv(out)
    _write_json(
        {
            "median": result.median,
            "sd": result.sd,
            "n_mistakes": result.n_mistakes,
            "n_censored": result.n_censored,
            "rule": args.rule,
        },
        str(out.with_suffix(".summary.json")),
    )
    written = [str(out), str(out.with_suffix(".summary.json"))]
    if not args.no_figure:
        from .figures import recovery_figure

        recovery_figure(result, out.with_suffix(".png"))
        written.append(str(out.with_suffix(".png")))
    sys.stdout.write("wrote " + ", ".join(written) + "\n")
    return EXIT_OK


def _cmd_calibrate(args) -> int:
    bank = _load_bank_checked(args.bank) if args.bank else None
    try:
        matrix = load_response_matrix(args.matrix, bank)
    except FileNotFoundError:
        raise ValidationFailure(f"matrix file not found: {args.matrix}")
    result = fit_2pl(matrix, config=_mcmc_config(args))
    result.to_json(args.out)
    worst = max(result.rhat.values())
    sys.stdout.write(
        f"calibrated {len(result.item_ids)} items x {len(result.person_ids)} persons; "
        f"max rhat {worst:.3f} -> {args.out}\n"
    )
    return EXIT_OK


def _cmd_eval_icc(args) -> int:
    try:
        data = ev.load_retest_csv(args.data)
    except FileNotFoundError:
        raise ValidationFailure(f"data file not found: {args.data}")
    fit = ev.fit_icc_model(
        data,
        priors=ev.IccPriors(mu_mean=args.prior_mu),
        config=_mcmc_config(args),
        include_measurement_error=not args.no_measurement_error,
    )
    fit.to_json(args.out)
    if not args.no_figure:
        from .figures import posterior_figure

        posterior_figure(fit.draws("icc"), "ICC", Path(args.out).with_suffix(".png"))
    s = fit.summary("icc")
    sys.stdout.write(
        f"ICC median {s['median']:.3f} 95% CI [{s['ci_low']:.3f}, {s['ci_high']:.3f}] -> {args.out}\n"
    )
    return EXIT_OK


def _cmd_eval_validity(args) -> int:
    try:
        data = ev.load_paired_csv(args.data)
    except FileNotFoundError:
        raise ValidationFailure(f"data file not found: {args.data}")
    fit = ev.fit_validity_model(data, config=_mcmc_config(args))
    fit.to_json(args.out)
    if not args.no_figure:
        from .figures import posterior_figure

        posterior_figure(
            fit.draws("rho"), "correlation", Path(args.out).with_suffix(".png")
        )
    s = fit.summary("rho")
    sys.stdout.write(
        f"rho median {s['median']:.3f} 95% CI [{s['ci_low']:.3f}, {s['ci_high']:.3f}] -> {args.out}\n"
    )
    return EXIT_OK


def _cmd_eval_samplesize(args) -> int:
    generative = {
        "mu": args.gen_mu,
        "sigma_alpha": args.gen_sigma_alpha,
        "sigma_epsilon": args.gen_sigma_epsilon,
        "se": args.gen_se,
        "rho": args.gen_rho,
    }
    result = ev.sample_size_simulation(
        model=args.model,
        generative=generative,
        candidate_ns=[int(n) for n in args.ns.split(",")],
        target_ci_halfwidth=args.target,
        seed=args.seed,
        n_replicates=args.replicates,
    )
    if args.format == "csv":
        lines = ["n,median_ci_halfwidth"]
        lines += [
            f"{n},{result['median_halfwidth'][n]!r}"
            for n in sorted(result["median_halfwidth"])
        ]
        _write_text("\n".join(lines) + "\n", args.out)
    else:
        _write_json(result, args.out)
    sys.stdout.write(
        f"recommended n: {result['recommended_n']} (target half-width {args.target})\n"
    )
    return EXIT_OK


def _cmd_correlations(args) -> int:
    bank = _load_bank_checked(args.bank)
    try:
        matrix = load_response_matrix(args.matrix, bank)
    except FileNotFoundError:
        raise ValidationFailure(f"matrix file not found: {args.matrix}")
    result = feature_correlations(
        matrix, bank, args.dimension, config=_mcmc_config(args)
    )
    if args.format == "csv":
        values = result["values"]
        lines = ["value," + ",".join(values)]
        for i, v in enumerate(values):
            row = ",".join(repr(result["correlation"][i, j]) for j in range(len(values)))
            lines.append(f"{v},{row}")
        _write_text("\n".join(lines) + "\n", args.out)
    else:
        _write_json(
            {
                "dimension": result["dimension"],
                "values": result["values"],
                "correlation": result["correlation"].tolist(),
                "ci_low": result["ci_low"].tolist(),
                "ci_high": result["ci_high"].tolist(),
                "excluded": result["excluded"],
            },
            args.out,
        )
    return EXIT_OK


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import ServiceConfig, app_from_config

    if args.config:
        config = ServiceConfig.from_file(args.config)
    else:
        if not args.bank or not args.data_dir:
            raise ValidationFailure("serve needs --config or both --bank and --data-dir")
        config = ServiceConfig(
            bank_paths=list(args.bank),
            data_dir=args.data_dir,
            port=args.port,
            host=args.host,
        )
    app = app_from_config(config)
    uvicorn.run(app, host=config.host, port=config.port, log_level="info")
    return EXIT_OK


def _cmd_replay(args) -> int:
    bank = _load_bank_checked(args.bank)
    events = engine.read_transcript(args.transcript)
    state = engine.replay_transcript(bank, events)
    logged = next(
        (e["score"] for e in events if e["event"] == "session_completed"), None
    )
    recomputed = None
    if state.status == "completed":
        score = engine.final_score(state)
        recomputed = {
            "theta_mean": score.theta_mean,
            "theta_se": score.theta_se,
            "raw_correctness": score.raw_correctness,
        }
    match = logged == recomputed
    _write_json(
        {"logged_score": logged, "recomputed_score": recomputed, "match": match},
        args.out,
    )
    return EXIT_OK if match else EXIT_RUNTIME


def build_parser() -> _Parser:
    parser = _Parser(prog="adaptest", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_bank = sub.add_parser("bank", help="bank tooling")
    bank_sub = p_bank.add_subparsers(dest="bank_command", required=True)
    p_synth = bank_sub.add_parser("synth", help="generate a synthetic bank")
    p_synth.add_argument("--family", choices=["vlat", "calvi"], required=True)
    p_synth.add_argument("--seed", type=int, required=True)
    p_synth.add_argument("--out", required=True)
    p_synth.set_defaults(func=_cmd_bank_synth)
    p_validate = bank_sub.add_parser("validate", help="validate a bank file")
    p_validate.add_argument("--bank", required=True)
    p_validate.add_argument("--lenient", action="store_true")
    p_validate.add_argument("--out")
    p_validate.set_defaults(func=_cmd_bank_validate)

    p_simulate = sub.add_parser("simulate", help="simulation studies")
    sim_sub = p_simulate.add_subparsers(dest="sim_command", required=True)
    p_sweep = sim_sub.add_parser("sweep", help="relative-SE length sweep")
    p_sweep.add_argument("--bank", required=True)
    p_sweep.add_argument("--lengths", required=True, help="A:B, A:B:step, or comma list")
    p_sweep.add_argument("--persons", type=int, default=500)
    p_sweep.add_argument("--seed", type=int, required=True)
    p_sweep.add_argument(
        "--baseline", choices=["full_bank", "static_reference"], default="full_bank"
    )
    p_sweep.add_argument("--out", required=True)
    p_sweep.add_argument("--no-figure", action="store_true")
    p_sweep.set_defaults(func=_cmd_simulate_sweep)
    p_recovery = sim_sub.add_parser("recovery", help="mistake recovery lengths")
    p_recovery.add_argument("--bank", required=True)
    p_recovery.add_argument("--persons", type=int, default=500)
    p_recovery.add_argument("--seed", type=int, required=True)
    p_recovery.add_argument("--scored-length", type=int)
    p_recovery.add_argument("--rule", choices=["printed", "pre_mistake"], default="printed")
    p_recovery.add_argument("--out", required=True)
    p_recovery.add_argument("--no-figure", action="store_true")
    p_recovery.set_defaults(func=_cmd_simulate_recovery)

    p_cal = sub.add_parser("calibrate", help="fit the 2PL model to a response matrix")
    p_cal.add_argument("--matrix", required=True)
    p_cal.add_argument("--bank", help="bank file giving item kinds")
    p_cal.add_argument("--seed", type=int, required=True)
    p_cal.add_argument("--out", required=True)
    _add_mcmc_flags(p_cal)
    p_cal.set_defaults(func=_cmd_calibrate)

    p_eval = sub.add_parser("eval", help="reliability/validity models")
    eval_sub = p_eval.add_subparsers(dest="eval_command", required=True)
    p_icc = eval_sub.add_parser("icc", help="test-retest reliability")
    p_icc.add_argument("--data", required=True)
    p_icc.add_argument("--seed", type=int, required=True)
    p_icc.add_argument("--out", required=True)
    p_icc.add_argument("--prior-mu", type=float, default=0.0)
    p_icc.add_argument("--no-measurement-error", action="store_true")
    p_icc.add_argument("--no-figure", action="store_true")
    _add_mcmc_flags(p_icc)
    p_icc.set_defaults(func=_cmd_eval_icc)
    p_val = eval_sub.add_parser("validity", help="convergent validity")
    p_val.add_argument("--data", required=True)
    p_val.add_argument("--seed", type=int, required=True)
    p_val.add_argument("--out", required=True)
    p_val.add_argument("--no-figure", action="store_true")
    _add_mcmc_flags(p_val)
    p_val.set_defaults(func=_cmd_eval_validity)
    p_ss = eval_sub.add_parser("samplesize", help="sample size by simulation")
    p_ss.add_argument("--model", choices=["icc", "validity"], required=True)
    p_ss.add_argument("--ns", required=True, help="comma-separated candidate sizes")
    p_ss.add_argument("--target", type=float, default=0.1)
    p_ss.add_argument("--seed", type=int, required=True)
    p_ss.add_argument("--replicates", type=int, default=20)
    p_ss.add_argument("--out")
    p_ss.add_argument("--format", choices=["json", "csv"], default="json")
    p_ss.add_argument("--gen-mu", type=float, default=0.0)
    p_ss.add_argument("--gen-sigma-alpha", type=float, default=1.0)
    p_ss.add_argument("--gen-sigma-epsilon", type=float, default=0.33)
    p_ss.add_argument("--gen-se", type=float, default=0.2)
    p_ss.add_argument("--gen-rho", type=float, default=0.8)
    p_ss.set_defaults(func=_cmd_eval_samplesize)

    p_corr = sub.add_parser("correlations", help="per-feature score correlations")
    p_corr.add_argument("--matrix", required=True)
    p_corr.add_argument("--bank", required=True)
    p_corr.add_argument("--dimension", required=True)
    p_corr.add_argument("--seed", type=int, required=True)
    p_corr.add_argument("--out")
    p_corr.add_argument("--format", choices=["json", "csv"], default="json")
    _add_mcmc_flags(p_corr)
    p_corr.set_defaults(func=_cmd_correlations)

    p_serve = sub.add_parser("serve", help="run the HTTP session service")
    p_serve.add_argument("--config", help="service config JSON")
    p_serve.add_argument("--bank", action="append", help="bank file (repeatable)")
    p_serve.add_argument("--data-dir")
    p_serve.add_argument("--port", type=int, default=8000)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.set_defaults(func=_cmd_serve)

    p_replay = sub.add_parser("replay", help="replay a session transcript")
    p_replay.add_argument("--transcript", required=True)
    p_replay.add_argument("--bank", required=True)
    p_replay.add_argument("--out")
    p_replay.set_defaults(func=_cmd_replay)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationFailure as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_VALIDATION
    except Exception as exc:  # runtime failures keep a distinct exit code
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
