#!/usr/bin/env python3
"""
rentlab CLI - train noisy-label classifiers with transition-matrix risk strategies.

Experiment commands:
    rentlab run --config configs/desk.json                  # Run every seed of a config
    rentlab run --risk dws --alpha 10 --seeds 0-9           # Override config values
    rentlab run --noise symmetric --tau 0.4 --t-source anchor
    rentlab sweep-alpha --alphas 0.1,1,10,100               # DWS alpha sweep + RW/RENT endpoints
    rentlab sweep-budget --budgets 0.25,0.5,1.0             # RENT budget ratios
    rentlab sweep-sigma --sigmas 0.1,0.5,1.0                # SNL and RW+SNL
    rentlab sweep-eps --eps 0,0.05,0.1                      # corrupted-T Forward and RENT
    rentlab analyze runs/                                   # Summarize finished runs

Other commands:
    rentlab presets
    rentlab status
    rentlab version

Usage:
    export RENTLAB_OUT_DIR=runs
    export RENTLAB_WORKERS=4
    rentlab run --config configs/desk.json --seeds 0-9
"""

import logging
import os
from pathlib import Path
from typing import Any, Dict, List, Optional

import typer
from rich.console import Console
from rich.table import Table

__version__ = "0.1.0"


def version_callback(value: bool):
    """Callback for --version flag."""
    if value:
        console.print(f"[bold]rentlab[/bold] version {__version__}")
        raise typer.Exit()


ENV_VARS = {
    "RENTLAB_OUT_DIR": ("Output directory for runs", "runs"),
    "RENTLAB_WORKERS": ("Worker processes per experiment", "1"),
    "RENTLAB_LOG_LEVEL": ("Log level", "INFO"),
    "RENTLAB_CONFIG": ("Default config file", None),
    "RENTLAB_SLOW_TESTS": ("Enable slow statistical tests", None),
}

console = Console()

app = typer.Typer(
    name="rentlab",
    help="rentlab - noisy-label learning with transition-matrix risks. Use 'rentlab status' to see environment variables.",
    no_args_is_help=True,
    rich_markup_mode="rich",
    add_completion=False,
)


# =============================================================================
# Configuration
# =============================================================================

def _setup_logging(level: str) -> None:
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format="%(asctime)s %(levelname)-7s %(message)s",
        datefmt="%H:%M:%S",
    )


def parse_seeds(text: str) -> List[int]:
    """'0,1,2' or '0-9' or a mix such as '0-4,10'."""
    seeds: List[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            lo, hi = part.split("-", 1)
            seeds.extend(range(int(lo), int(hi) + 1))
        else:
            seeds.append(int(part))
    if not seeds:
        raise typer.BadParameter(f"no seeds in {text!r}")
    return seeds


def parse_floats(text: str) -> List[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise typer.BadParameter(f"expected comma-separated numbers, got {text!r}")
    if not values:
        raise typer.BadParameter("expected at least one value")
    return values


def resolve_config(config: Optional[Path] = None, **flags: Any):
    """Config file (or RENTLAB_CONFIG) with CLI flags applied on top; None flags are ignored."""
    from harness import ConfigError, ExperimentConfig, load_config, with_overrides

    env_defaults = {
        "out_dir": os.getenv("RENTLAB_OUT_DIR", "runs"),
        "workers": int(os.getenv("RENTLAB_WORKERS", "1")),
    }
    path = config or os.getenv("RENTLAB_CONFIG")
    try:
        cfg = load_config(path, defaults=env_defaults) if path else ExperimentConfig.from_dict(env_defaults)
    except (ConfigError, ValueError) as e:
        console.print(f"[red]Config error:[/red] {e}")
        raise typer.Exit(1)

    mapping = {
        "risk": ("risk", "name"),
        "alpha": ("risk", "alpha"),
        "weight_samples": ("risk", "num_weight_samples"),
        "budget": ("risk", "budget"),
        "budget_ratio": ("risk", "budget_ratio"),
        "strategy": ("risk", "strategy"),
        "sigma": ("risk", "sigma"),
        "noise": ("noise", "kind"),
        "tau": ("noise", "rate"),
        "preset": ("noise", "preset"),
        "t_source": ("transition", "source"),
        "eps_t": ("transition", "eps"),
        "t_path": ("transition", "path"),
        "anchor_fraction": ("transition", "anchor_fraction"),
        "epochs": ("top", "epochs"),
        "batch_size": ("top", "batch_size"),
        "out": ("top", "out_dir"),
        "workers": ("top", "workers"),
        "timing": ("top", "timing"),
    }
    sections: Dict[str, Dict[str, Any]] = {}
    for flag, value in flags.items():
        if value is None:
            continue
        if flag == "seeds":
            sections.setdefault("top", {})["seeds"] = parse_seeds(value)
            continue
        section, key = mapping[flag]
        sections.setdefault(section, {})[key] = value
    try:
        return with_overrides(cfg, **sections) if sections else cfg
    except (ConfigError, ValueError) as e:
        console.print(f"[red]Config error:[/red] {e}")
        raise typer.Exit(1)


def _fmt(value: Optional[float]) -> str:
    return "-" if value is None or value != value else f"{value:.4f}"


def _results_table(title: str, results) -> Table:
    table = Table(title=title, show_header=True, header_style="bold cyan")
    table.add_column("Seed", style="bold")
    table.add_column("Status")
    table.add_column("Final test acc", justify="right")
    table.add_column("Best test acc", justify="right")
    table.add_column("T error", justify="right", style="dim")
    for r in results:
        status = "[green]completed[/green]" if r.ok else f"[red]failed[/red] [dim]{r.error}[/dim]"
        table.add_row(str(r.seed), status, _fmt(r.final_test_accuracy), _fmt(r.best_test_accuracy),
                      _fmt(r.transition_error))
    return table


def _frame_table(title: str, frame) -> Table:
    table = Table(title=title, show_header=True, header_style="bold cyan")
    for column in frame.columns:
        table.add_column(str(column))
    for row in frame.itertuples(index=False):
        table.add_row(*[_fmt(v) if isinstance(v, float) else str(v) for v in row])
    return table


# Options shared by run and the sweeps
ConfigOpt = typer.Option(None, "--config", "-c", help="JSON or YAML experiment config")
SeedsOpt = typer.Option(None, "--seeds", help="Seeds, e.g. 0-9 or 0,3,7")
OutOpt = typer.Option(None, "--out", "-o", help="Output directory")
WorkersOpt = typer.Option(None, "--workers", "-w", help="Worker processes")
EpochsOpt = typer.Option(None, "--epochs", help="Training epochs")
NoiseOpt = typer.Option(None, "--noise", help="none, symmetric, asymmetric or matrix")
TauOpt = typer.Option(None, "--tau", help="Noise rate")
PresetOpt = typer.Option(None, "--preset", help="Noise preset name (see 'rentlab presets')")
TSourceOpt = typer.Option(None, "--t-source", help="true, anchor, corrupted or file")


# =============================================================================
# Experiment Commands
# =============================================================================

@app.command("run")
def run(
    config: Optional[Path] = ConfigOpt,
    risk: Optional[str] = typer.Option(
        None, "--risk", "-r", help="ce, fl, bw, rw, dws, rent, snl, rw-snl or rw-threshold"
    ),
    alpha: Optional[float] = typer.Option(None, "--alpha", help="DWS concentration"),
    weight_samples: Optional[int] = typer.Option(None, "--weight-samples", help="DWS weight draws per step"),
    budget: Optional[int] = typer.Option(None, "--budget", help="RENT budget (absolute)"),
    budget_ratio: Optional[float] = typer.Option(None, "--budget-ratio", help="RENT budget as a ratio of the pool"),
    strategy: Optional[str] = typer.Option(None, "--strategy", help="batch, global or global-class"),
    sigma: Optional[float] = typer.Option(None, "--sigma", help="Label perturbation scale"),
    noise: Optional[str] = NoiseOpt,
    tau: Optional[float] = TauOpt,
    preset: Optional[str] = PresetOpt,
    t_source: Optional[str] = TSourceOpt,
    eps_t: Optional[float] = typer.Option(None, "--eps-t", help="Corruption of T for --t-source corrupted"),
    t_path: Optional[str] = typer.Option(
        None, "--transition-file", "--t-path", help="CSV of T for --t-source file"
    ),
    anchor_fraction: Optional[float] = typer.Option(None, "--anchor-fraction", help="Top fraction for anchors"),
    epochs: Optional[int] = EpochsOpt,
    batch_size: Optional[int] = typer.Option(None, "--batch-size", help="Minibatch size"),
    seeds: Optional[str] = SeedsOpt,
    out: Optional[str] = OutOpt,
    workers: Optional[int] = WorkersOpt,
    timing: Optional[bool] = typer.Option(None, "--timing/--no-timing", help="Record wall clock in result.json"),
):
    """Run every seed of an experiment; exits 1 if any seed failed."""
    from harness import run_experiment

    cfg = resolve_config(
        config, risk=risk, alpha=alpha, weight_samples=weight_samples, budget=budget, budget_ratio=budget_ratio,
        strategy=strategy, sigma=sigma, noise=noise, tau=tau, preset=preset, t_source=t_source, eps_t=eps_t,
        t_path=t_path, anchor_fraction=anchor_fraction, epochs=epochs, batch_size=batch_size, seeds=seeds,
        out=out, workers=workers, timing=timing,
    )
    console.print(f"[bold]Config[/bold] {cfg.config_hash()} -> [cyan]{cfg.run_dir()}[/cyan]")
    results = run_experiment(cfg)
    console.print(_results_table(f"{cfg.risk.name} ({len(results)} seeds)", results))
    if not all(r.ok for r in results):
        raise typer.Exit(1)


def _run_sweep(kind: str, cfg, values: List[float], out_csv: Optional[Path]):
    import harness

    sweep = {
        "alpha": harness.alpha_sweep,
        "budget": harness.budget_sweep,
        "sigma": harness.sigma_sweep,
        "eps": harness.eps_sweep,
    }[kind]
    table = sweep(cfg, values)
    path = out_csv or Path(cfg.out_dir) / f"sweep_{kind}.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    harness.write_table(table, path)
    console.print(_frame_table(f"{kind} sweep", table))
    if "spearman" in table.attrs:
        console.print(f"Spearman(-log alpha, accuracy): [cyan]{table.attrs['spearman']:.3f}[/cyan]")
    console.print(f"[dim]Wrote {path}[/dim]")
    if (table["completed"] < table["seeds"]).any():
        raise typer.Exit(1)


@app.command("sweep-alpha")
def sweep_alpha(
    alphas: str = typer.Option("0.1,0.2,0.5,1,10,100,1000", "--alphas", help="Comma-separated alpha values"),
    config: Optional[Path] = ConfigOpt,
    noise: Optional[str] = NoiseOpt,
    tau: Optional[float] = TauOpt,
    preset: Optional[str] = PresetOpt,
    t_source: Optional[str] = TSourceOpt,
    epochs: Optional[int] = EpochsOpt,
    seeds: Optional[str] = SeedsOpt,
    out: Optional[str] = OutOpt,
    workers: Optional[int] = WorkersOpt,
    csv: Optional[Path] = typer.Option(None, "--csv", help="Table output path"),
):
    """DWS accuracy per alpha with RW and RENT endpoints."""
    cfg = resolve_config(config, noise=noise, tau=tau, preset=preset, t_source=t_source, epochs=epochs,
                         seeds=seeds, out=out, workers=workers)
    _run_sweep("alpha", cfg, parse_floats(alphas), csv)


@app.command("sweep-budget")
def sweep_budget(
    budgets: str = typer.Option("0.25,0.5,1.0", "--budgets", help="Comma-separated budget ratios"),
    config: Optional[Path] = ConfigOpt,
    strategy: Optional[str] = typer.Option(None, "--strategy", help="batch, global or global-class"),
    noise: Optional[str] = NoiseOpt,
    tau: Optional[float] = TauOpt,
    preset: Optional[str] = PresetOpt,
    epochs: Optional[int] = EpochsOpt,
    seeds: Optional[str] = SeedsOpt,
    out: Optional[str] = OutOpt,
    workers: Optional[int] = WorkersOpt,
    csv: Optional[Path] = typer.Option(None, "--csv", help="Table output path"),
):
    """RENT accuracy per resampling budget ratio."""
    cfg = resolve_config(config, strategy=strategy, noise=noise, tau=tau, preset=preset, epochs=epochs,
                         seeds=seeds, out=out, workers=workers)
    _run_sweep("budget", cfg, parse_floats(budgets), csv)


@app.command("sweep-sigma")
def sweep_sigma(
    sigmas: str = typer.Option("0.1,0.5,1.0", "--sigmas", help="Comma-separated sigma values"),
    config: Optional[Path] = ConfigOpt,
    noise: Optional[str] = NoiseOpt,
    tau: Optional[float] = TauOpt,
    preset: Optional[str] = PresetOpt,
    epochs: Optional[int] = EpochsOpt,
    seeds: Optional[str] = SeedsOpt,
    out: Optional[str] = OutOpt,
    workers: Optional[int] = WorkersOpt,
    csv: Optional[Path] = typer.Option(None, "--csv", help="Table output path"),
):
    """SNL and RW+SNL accuracy per sigma."""
    cfg = resolve_config(config, noise=noise, tau=tau, preset=preset, epochs=epochs, seeds=seeds, out=out,
                         workers=workers)
    _run_sweep("sigma", cfg, parse_floats(sigmas), csv)


@app.command("sweep-eps")
def sweep_eps(
    eps: str = typer.Option("0,0.05,0.1,0.2", "--eps", help="Comma-separated T corruption values"),
    config: Optional[Path] = ConfigOpt,
    noise: Optional[str] = NoiseOpt,
    tau: Optional[float] = TauOpt,
    preset: Optional[str] = PresetOpt,
    epochs: Optional[int] = EpochsOpt,
    seeds: Optional[str] = SeedsOpt,
    out: Optional[str] = OutOpt,
    workers: Optional[int] = WorkersOpt,
    csv: Optional[Path] = typer.Option(None, "--csv", help="Table output path"),
):
    """Forward and RENT accuracy under a corrupted T."""
    cfg = resolve_config(config, noise=noise, tau=tau, preset=preset, epochs=epochs, seeds=seeds, out=out,
                         workers=workers)
    _run_sweep("eps", cfg, parse_floats(eps), csv)


@app.command("analyze")
def analyze(rundir: Path = typer.Argument(..., help="Output root or a single config directory")):
    """Per-config final and best-epoch test accuracy; writes summary.json files."""
    from harness import analyze_run_dir

    try:
        frame = analyze_run_dir(rundir)
    except FileNotFoundError as e:
        console.print(f"[red]{e}[/red]")
        raise typer.Exit(1)
    if frame.empty:
        console.print(f"[dim]No finished runs under {rundir}[/dim]")
        return
    console.print(_frame_table(f"Runs in {rundir}", frame.drop(columns=["failed_seeds"])))
    failed = frame[frame["failed_seeds"].map(len) > 0]
    for row in failed.itertuples(index=False):
        console.print(f"[yellow]{row.config_hash}: failed seeds {row.failed_seeds}[/yellow]")


# =============================================================================
# Info Commands
# =============================================================================

@app.command("presets")
def presets():
    """List all noise presets."""
    from noise_presets import get_presets

    table = Table(title="Noise presets", show_header=True, header_style="bold cyan")
    table.add_column("Name", style="bold")
    table.add_column("Kind")
    table.add_column("Rate", justify="right")
    table.add_column("Classes", justify="right")
    table.add_column("Description", style="dim")
    for name, p in sorted(get_presets().items()):
        table.add_row(name, p.kind, f"{p.rate:g}", str(p.num_classes or "any"), p.description)
    console.print(table)


def _make_env_table(title: str, env_vars: dict) -> Table:
    """Create a table for environment variables."""
    table = Table(title=title, show_header=True, header_style="bold cyan")
    table.add_column("Variable", style="bold")
    table.add_column("Description")
    table.add_column("Current Value", style="green")
    table.add_column("Default", style="dim")

    for var_name, (description, default) in env_vars.items():
        current = os.getenv(var_name)
        display_value = f"[green]{current}[/green]" if current else f"[dim]{default or 'not set'}[/dim]"
        table.add_row(var_name, description, display_value, str(default) if default else "-")

    return table


@app.command("status")
def status():
    """Show environment configuration and the default config."""
    from harness import ExperimentConfig

    console.print()
    console.print(_make_env_table("Environment", ENV_VARS))
    default = ExperimentConfig()
    console.print()
    console.print(
        f"[bold]Defaults:[/bold] C={default.data.num_classes}, d={default.data.dim}, "
        f"N={default.data.train_size}/{default.data.test_size}, {default.model.architecture} "
        f"width {default.model.hidden_width}, {default.epochs} epochs, batch {default.batch_size}, "
        f"{default.optimizer.kind} lr={default.optimizer.lr:g}"
    )


@app.command("version")
def version():
    """Show version information."""
    console.print("[bold]rentlab[/bold] - transition-matrix risks for noisy labels")
    console.print(f"Version: {__version__}")


# =============================================================================
# Main Entry Point
# =============================================================================

@app.callback(invoke_without_command=True)
def callback(
    ctx: typer.Context,
    version: bool = typer.Option(
        False,
        "--version",
        help="Show version and exit",
        callback=version_callback,
        is_eager=True,
    ),
    log_level: str = typer.Option(
        os.getenv("RENTLAB_LOG_LEVEL", "INFO"), "--log-level", help="DEBUG, INFO, WARNING or ERROR"
    ),
):
    """rentlab CLI callback."""
    _setup_logging(log_level)


def main():
    """Main entry point for the CLI."""
    app()


if __name__ == "__main__":
    main()
