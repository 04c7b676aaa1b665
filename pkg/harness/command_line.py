"""
rsa-lab command line: run, verify, rate, wasserstein, gen-problem, scenarios
"""

import argparse
import json
import logging

from config.scenario_catalog import ScenarioCatalog
from config.settings import ExperimentConfig, Settings, parse_override
from harness.experiment import ExperimentRunner, certificate_from_params
from harness.reports import EXIT_INVALID, EXIT_PASS
from utils.divergence import divergence_from_config
from utils.exceptions import ConfigurationError, InfeasibleParametersError, RsaLabError
from utils.problems import Composite, generate_nonlinear, generate_quadratic, load_problem, save_problem
from utils.serialization_utils import dumps_canonical
from utils.wasserstein import load_measure, wv_exact

logger = logging.getLogger(__name__)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="rsa-lab",
        description="Contraction rates of recursive stochastic algorithms: certificates, coupled runs, verification",
    )
    parser.add_argument("--verbose", "-v", action="store_true", help="Log at DEBUG level")
    parser.add_argument("--log-file", default="rsa_lab.log", help="Log file path")
    subparsers = parser.add_subparsers(dest="command", required=True)

    run_parser = subparsers.add_parser("run", help="Run coupled replications and write trajectory and summary")
    run_parser.add_argument("config", help="Experiment file (TOML or JSON)")
    run_parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE")

    verify_parser = subparsers.add_parser("verify", help="Check empirical means against the certified bounds")
    target = verify_parser.add_mutually_exclusive_group(required=True)
    target.add_argument("config", nargs="?", help="Experiment file (TOML or JSON)")
    target.add_argument("--scenario", help="Name of a committed scenario")
    verify_parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE")

    rate_parser = subparsers.add_parser("rate", help="Print the rate certificate for a parameter set")
    rate_parser.add_argument("--algo", required=True, help="Algorithm kind")
    rate_parser.add_argument("--params", nargs="+", default=[], help="KEY=VALUE pairs or one JSON object")

    wasserstein_parser = subparsers.add_parser("wasserstein", help="Exact W_V between two measure files")
    wasserstein_parser.add_argument("--mu", required=True, help="First measure file")
    wasserstein_parser.add_argument("--nu", required=True, help="Second measure file")
    wasserstein_parser.add_argument("--divergence", default="squared_euclidean",
                                    help="Variant name or JSON divergence spec")
    wasserstein_parser.add_argument("--problem", help="Problem instance for problem-dependent divergences")
    wasserstein_parser.add_argument("--plan", action="store_true", help="Include the optimal coupling")

    problem_parser = subparsers.add_parser("gen-problem", help="Generate and certify a problem instance file")
    problem_parser.add_argument("--family", choices=["quadratic", "nonlinear"], default="quadratic")
    problem_parser.add_argument("--d", type=int, required=True)
    problem_parser.add_argument("--N", type=int, required=True)
    problem_parser.add_argument("--c", type=float, required=True)
    problem_parser.add_argument("--L", type=float, required=True)
    problem_parser.add_argument("--seed", type=int, default=0)
    problem_parser.add_argument("--composite", choices=["zero", "l1", "half_squared_l2"], default="zero")
    problem_parser.add_argument("--lambda", dest="lam", type=float, default=0.0)
    problem_parser.add_argument("--output", required=True, help="Instance file to write")

    subparsers.add_parser("scenarios", help="List the committed verification scenarios")
    return parser


def parse_params(items):
    """Parse rate parameters from KEY=VALUE pairs or one JSON object"""
    if len(items) == 1 and items[0].lstrip().startswith("{"):
        try:
            return json.loads(items[0])
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"Malformed --params JSON: {e}") from e
    params = {}
    for item in items:
        keys, value = parse_override(f"params.{item}")
        params[keys[-1]] = value
    return params


def parse_divergence(text):
    if text.lstrip().startswith("{"):
        try:
            return json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"Malformed divergence spec: {e}") from e
    return text


def load_experiment(args):
    if getattr(args, "scenario", None):
        config_file = ScenarioCatalog().get_scenario_path(args.scenario)
    else:
        config_file = args.config
    settings = Settings(config_file, args.overrides)
    return ExperimentConfig.from_settings(settings)


def cmd_run(args):
    config = load_experiment(args)
    runner = ExperimentRunner(config, workers=Settings.get_worker_count())
    trajectory, summary = runner.run()
    paths = runner.write_outputs(trajectory, summary)
    print(dumps_canonical({"outputs": paths, "diverged_count": summary["diverged_count"],
                           "alpha_empirical": summary["alpha_empirical"]}))
    return EXIT_PASS


def cmd_verify(args):
    config = load_experiment(args)
    runner = ExperimentRunner(config, workers=Settings.get_worker_count())
    report, trajectory, summary = runner.verify()
    paths = runner.write_outputs(trajectory, summary, report)
    print(report.summary_line())
    print(f"Report written to {paths['report']}")
    return report.exit_code


def cmd_rate(args):
    certificate = certificate_from_params(args.algo, parse_params(args.params))
    print(dumps_canonical(certificate.to_json_dict()))
    return EXIT_PASS if certificate.feasible else EXIT_INVALID


def cmd_wasserstein(args):
    mu = load_measure(args.mu)
    nu = load_measure(args.nu)
    problem = load_problem(args.problem) if args.problem else None
    divergence = divergence_from_config(parse_divergence(args.divergence), problem)
    value, plan = wv_exact(mu, nu, divergence)
    payload = {"value": value, "atoms_m": len(mu), "atoms_n": len(nu)}
    if args.plan:
        payload["plan"] = plan.matrix.tolist()
    print(dumps_canonical(payload))
    return EXIT_PASS


def cmd_gen_problem(args):
    composite = Composite(kind=args.composite, lam=args.lam)
    if args.family == "quadratic":
        problem = generate_quadratic(args.d, args.N, args.c, args.L, args.seed, composite)
    else:
        problem = generate_nonlinear(args.d, args.N, args.c, args.L, args.seed, composite)
    save_problem(problem, args.output)
    print(f"Wrote {args.family} instance (residual {problem.residual:.3e}) to {args.output}")
    return EXIT_PASS


def cmd_scenarios(args):
    catalog = ScenarioCatalog()
    for name in catalog.get_all_scenario_names():
        print(f"{name}: {catalog.get_scenario(name)['description']}")
    return EXIT_PASS


COMMANDS = {
    "run": cmd_run,
    "verify": cmd_verify,
    "rate": cmd_rate,
    "wasserstein": cmd_wasserstein,
    "gen-problem": cmd_gen_problem,
    "scenarios": cmd_scenarios,
}


def dispatch(args):
    """
    Run a parsed command and map failures to exit codes

    Returns:
        int: 0 pass, 1 bound violated, 2 infeasible or invalid input, 3 too many diverged replications
    """
    try:
        return COMMANDS[args.command](args)
    except InfeasibleParametersError as e:
        logger.error(f"Infeasible parameters: {str(e)}")
        if e.report is not None:
            print(dumps_canonical(e.report))
        return EXIT_INVALID
    except (RsaLabError, FileNotFoundError, KeyError) as e:
        logger.error(f"Error running {args.command}: {str(e)}")
        return EXIT_INVALID
