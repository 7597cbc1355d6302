"""Command-line entry point.

Exit codes: 0 YES, 1 NO, 2 PROMISE_VIOLATED, 3 library error, 4 bad usage,
5 unexpected failure.  Subcommands without a verdict exit 0 on success.
"""

from __future__ import annotations

import sys
from fractions import Fraction
from pathlib import Path

import click
import numpy as np

from . import harness as hz
from .ensembles import GibbsParams, MicrocanonicalParams, solve_beta, tuned_ensemble_expectation
from .errors import TMRelaxError
from .hamiltonian import compile_hamiltonian, export_hamiltonian
from .observables import AverageMethod, AverageReport, finite_time_average, finite_time_bound, reports_to_csv
from .polyapprox import export_polynomial, gaussian_poly, sqrt_poly
from .qsim import exact_microcanonical, make_schedule, prepare_microcanonical, trace_distance
from .tm_model import build_composite_machine, build_padded_machine, compile_program, initial_configuration, orbit
from .tmfile import dump_orbit, format_machine

EXIT_ERROR = 3
EXIT_USAGE = 4
EXIT_CRASH = 5


class Ctx:
    def __init__(self, seed, shots, tol, budget, outdir):
        self.seed = seed
        self.shots = shots
        self.tol = tol
        self.budget = budget
        self.outdir = Path(outdir) if outdir else None

    def emit(self, name: str, text: str) -> None:
        """Print, and also write to the output directory when one is set."""
        click.echo(text, nl=not text.endswith("\n"))
        if self.outdir:
            self.outdir.mkdir(parents=True, exist_ok=True)
            (self.outdir / name).write_text(text)


pass_ctx = click.make_pass_decorator(Ctx)


def machine_args(f):
    f = click.option("--padded", is_flag=True, help="Use the padded machine.")(f)
    f = click.option("--alpha", default="1/2", show_default=True, help="A-cell fraction.")(f)
    f = click.option("-N", "N", type=int, default=8, show_default=True, help="Ring size.")(f)
    f = click.option("-x", "--input", "x", default="", help="Input word on the M-cells.")(f)
    return click.argument("machine")(f)


def therm_args(f):
    f = click.option("--alpha", default="1/2", show_default=True)(f)
    f = click.option("-N", "N", type=int, default=4, show_default=True)(f)
    f = click.option("-x", "--input", "x", default="")(f)
    f = click.option("--ensemble", type=click.Choice(["mc", "gibbs"]), default="mc", show_default=True)(f)
    f = click.option("--energy", "E", type=float, default=None, help="Defaults to the initial state's energy.")(f)
    f = click.option("-w", "--width", "w", type=float, default=1.0, show_default=True)(f)
    f = click.option("--source", type=click.Choice(["exact", "qsim"]), default="exact", show_default=True)(f)
    return click.argument("machine")(f)


def _verdict_exit(v: hz.Verdict) -> None:
    sys.exit(v.outcome.exit_code)


@click.group()
@click.option("--seed", type=int, default=None, help="RNG seed for sampled estimates.")
@click.option("--shots", type=int, default=0, help="Shot count; 0 picks the Hoeffding count.")
@click.option("--tol", type=float, default=None, help="Override the promise eps.")
@click.option("--budget", type=int, default=None, help="Cap on the doubled-space dimension.")
@click.option("--outdir", type=click.Path(file_okay=False), default=None, help="Also write outputs here.")
@click.pass_context
def cli(ctx, seed, shots, tol, budget, outdir):
    """Relaxation and thermalization of Turing-machine ring Hamiltonians."""
    ctx.obj = Ctx(seed, shots, tol, budget, outdir)
    if budget is not None:
        hz.TUNED_BUDGET = budget


@cli.command("compile")
@click.argument("machine")
@click.option("-N", "N", type=int, default=8, show_default=True)
@click.option("--form", type=click.Choice(["raw", "composite", "padded"]), default="composite", show_default=True)
@pass_ctx
def compile_cmd(c: Ctx, machine, N, form):
    """Compile a machine to its 2-local ring Hamiltonian."""
    prog = hz.resolve_machine(machine)
    if form == "composite":
        tm = build_composite_machine(prog)
    elif form == "padded":
        tm = build_padded_machine(prog)
    else:
        tm = prog if not hasattr(prog, "steps") else compile_program(prog)
    c.emit(f"{hz.machine_name(machine)}.tm", format_machine(tm))
    c.emit(f"{hz.machine_name(machine)}-N{N}.ham", export_hamiltonian(compile_hamiltonian(tm, N)))


@cli.command("orbit")
@machine_args
@pass_ctx
def orbit_cmd(c: Ctx, machine, x, N, alpha, padded):
    """Print the orbit of the initial configuration."""
    prog = hz.resolve_machine(machine)
    tm = build_padded_machine(prog) if padded else build_composite_machine(prog)
    orb = orbit(tm, initial_configuration(tm, x, N, Fraction(alpha)))
    c.emit(f"{hz.machine_name(machine)}-N{N}.orbit", dump_orbit(orb))


@cli.command("relax")
@machine_args
@click.option("--method", type=click.Choice(["exact", "qsim"]), default="exact", show_default=True)
@click.option("--tau", type=float, default=None, help="Decide the finite-time variant at this time.")
@pass_ctx
def relax_cmd(c: Ctx, machine, x, N, alpha, padded, method, tau):
    """Decide a relaxation instance; prints the verdict and the averages."""
    inst = hz.build_hardness_instance(machine, x, N, alpha, padded, eps=c.tol)
    reports = [AverageReport(inst.exact_average(), AverageMethod.SPECTRAL, instance=inst.name)]
    if tau is not None:
        v = hz.decide_ftfsrelax(inst, tau)
        reports.append(AverageReport(v.value, AverageMethod.FINITE_TIME, v.margin, tau, inst.name))
    else:
        v = hz.decide_fsrelax(inst, method, seed=c.seed, shots=c.shots or 0)
    c.emit("verdict.csv", hz.rows_to_csv([v.row()]))
    c.emit("averages.csv", reports_to_csv(reports))
    _verdict_exit(v)


def _tuned(c: Ctx, machine, x, N, alpha, ensemble, E, w, source):
    ens = hz.ThermEnsemble(ensemble, E, w)
    return hz.build_tuned_instance(machine, x, N, alpha, ens, source, eps=c.tol, seed=c.seed)


@cli.command("therm")
@therm_args
@pass_ctx
def therm_cmd(c: Ctx, machine, x, N, alpha, ensemble, E, w, source):
    """Decide a thermalization instance on the tuned construction."""
    inst = _tuned(c, machine, x, N, alpha, ensemble, E, w, source)
    v = hz.decide_fstherm(inst)
    c.emit("verdict.csv", hz.rows_to_csv([v.row()]))
    _verdict_exit(v)


@cli.command("tune")
@therm_args
@pass_ctx
def tune_cmd(c: Ctx, machine, x, N, alpha, ensemble, E, w, source):
    """Report the tuned observable parameters."""
    t = _tuned(c, machine, x, N, alpha, ensemble, E, w, source).tuning
    row = {k: repr(getattr(t, k)) if k != "source" else t.source for k in ("p", "q", "A_hat", "residual", "delta", "source")}
    c.emit("tuning.csv", hz.rows_to_csv([row]))


@cli.command("poly")
@click.argument("kind", type=click.Choice(["sqrt", "gauss"]))
@click.option("--eps", type=float, default=1e-4, show_default=True)
@click.option("-w", "--width", "w", type=float, default=0.5, show_default=True, help="Gaussian width.")
@click.option("--sign", type=click.Choice(["+", "-"]), default="+", show_default=True)
@pass_ctx
def poly_cmd(c: Ctx, kind, eps, w, sign):
    """Build and certify a polynomial; prints it in export form."""
    p = sqrt_poly(eps, 1 if sign == "+" else -1) if kind == "sqrt" else gaussian_poly(w, eps)
    c.emit(f"{kind}.poly", export_polynomial(p))


@cli.command("qprep")
@click.option("--qubits", type=int, default=2, show_default=True)
@click.option("--w-frac", type=float, default=0.5, show_default=True, help="w as a fraction of ||H||.")
@click.option("--eps", type=float, default=0.1, show_default=True)
@click.option("--energy", "E", type=float, default=0.0, show_default=True)
@pass_ctx
def qprep_cmd(c: Ctx, qubits, w_frac, eps, E):
    """Prepare a microcanonical state of a random Hamiltonian and report."""
    rng = np.random.default_rng(c.seed)
    D = 2**qubits
    G = rng.normal(size=(D, D)) + 1j * rng.normal(size=(D, D))
    H = (G + G.conj().T) / 2
    H /= np.linalg.norm(H, 2)
    w = w_frac * float(np.linalg.norm(H, 2))
    prep = prepare_microcanonical(H, E, w, seed=c.seed, eps=eps)
    exact = exact_microcanonical(H, E, w)
    alpha = float(np.linalg.norm(H, 2)) + abs(E)
    s = make_schedule(eps, alpha, w)
    row = {
        "qubits": qubits,
        "w": repr(w),
        "eps": repr(eps),
        "trace_distance": repr(trace_distance(prep.rho, exact)),
        "declared_error": repr(prep.declared_error),
        "success_probability": repr(prep.success_probability),
        "probability_floor": repr(prep.probability_floor),
        "sampled_tries": prep.sampled_tries,
        "degree": prep.degree,
        "eta_clamped": s.eta_clamped,
    }
    c.emit("qprep.csv", hz.rows_to_csv([row]))


@cli.command("sweep")
@click.argument("axis", type=click.Choice(["tau", "w", "E"]))
@click.argument("machine")
@click.option("-N", "N", type=int, default=None, help="Default 8 for tau, 4 otherwise.")
@click.option("--alpha", default="1/2", show_default=True)
@click.option("-x", "--input", "x", default="")
@click.option("--points", type=int, default=10, show_default=True)
@click.option("--lo", type=float, default=None)
@click.option("--hi", type=float, default=None)
@pass_ctx
def sweep_cmd(c: Ctx, axis, machine, N, alpha, x, points, lo, hi):
    """Grid sweeps: finite-time averages over tau, or ensemble targets over w or E."""
    rows = []
    if axis == "tau":
        inst = hz.build_hardness_instance(machine, x, N or 8, alpha, eps=c.tol)
        sd, A = inst.spectrum(), inst.orbit_observable()
        exact = inst.exact_average()
        A_norm = float(np.linalg.norm(A, 2))
        lo = lo or hz.tau_threshold(inst, A_norm)
        hi = hi or 1000 * lo
        for tau in np.geomspace(lo, hi, points):
            v = finite_time_average(sd, A, tau)
            rows.append(
                {
                    "tau": repr(float(tau)),
                    "value": repr(v),
                    "deviation": repr(abs(v - exact)),
                    "bound": repr(float(finite_time_bound(inst.T, tau, A_norm))),
                }
            )
    else:
        inst = _tuned(c, machine, x, N or 4, alpha, "mc", None, 1.0, "exact")
        lam = inst.spectrum.eigenvalues
        t = inst.tuning
        if axis == "w":
            grid = np.geomspace(lo or 0.25, hi or 16.0, points)
            params = [MicrocanonicalParams(inst.E, w) for w in grid]
        else:
            grid = np.linspace(lo if lo is not None else lam.min() / 2, hi if hi is not None else lam.max() / 2, points)
            params = [GibbsParams(solve_beta(lam, E)) for E in grid]
        for g, ens in zip(grid, params):
            r = tuned_ensemble_expectation(inst.tuned, inst.spectrum, t.p, t.q, ens, inst.H)
            rows.append({axis: repr(float(g)), "target": repr(r.value), "a2_weight": repr(r.a2_weight)})
    c.emit(f"sweep-{axis}.csv", hz.rows_to_csv(rows))


@cli.command("corpus")
@click.option("--seeds", type=int, default=0, show_default=True, help="QSIM seeds per instance.")
@click.option("--workers", type=int, default=1, show_default=True)
@pass_ctx
def corpus_cmd(c: Ctx, seeds, workers):
    """Run the built-in corpus; exits 0 when every verdict is the expected one."""
    base = c.seed or 0
    rows = hz.run_corpus(seeds=range(base, base + seeds), workers=workers)
    c.emit("corpus.csv", hz.rows_to_csv(rows))
    bad = [r["instance"] for r in rows if r["outcome"] != r["expected"]]
    if bad:
        click.echo("unexpected verdicts: " + ", ".join(bad), err=True)
        sys.exit(EXIT_ERROR)


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except SystemExit as exc:
        return int(exc.code or 0)
    except click.exceptions.Abort:
        return EXIT_USAGE
    except click.ClickException as exc:
        exc.show()
        return EXIT_USAGE
    except (TMRelaxError, ValueError) as exc:
        click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
        return EXIT_ERROR
    except Exception as exc:  # noqa: BLE001
        click.echo(f"internal error: {type(exc).__name__}: {exc}", err=True)
        return EXIT_CRASH
    return 0


if __name__ == "__main__":
    sys.exit(main())
