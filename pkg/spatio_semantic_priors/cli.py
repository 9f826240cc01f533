"""Command line entry point.

Subcommands (each iterating over the scenes of the run configuration):

- ``synth``: draw the synthetic sample sets of the scene files;
- ``ingest``: load, align, filter and merge the sample sets of the manifests
  (or re-read the synthetic ones) into a normalized bundle;
- ``plan``: build one roadmap per scene and plan for every label;
- ``eval``: gather the plan results and KL divergences into a report;
- ``all``: the four of them, in this order.

Outputs go to ``output_dir/<scene>/`` (``sample_set/``, ``ingest_summary.json``,
``plan_results.json``, ``roadmap.txt``) and ``output_dir/report.{csv,json}``.
"""
import argparse
import json
import logging
import pathlib
import sys
import typing

from . import logs
from .errors import InputError, SpatioSemanticError
from .evaluation import (
    EvalReport,
    SceneDistribution,
    emit_report,
    kl_divergence,
    load_ground_truth,
)
from .planner import PlanResult, build_prm, plan
from .priors import SampleSet
from .run_config import RunConfig
from .sampler import (
    RoomDistribution,
    draw_sample_set,
    load_sample_set,
    write_sample_set,
)


logger = logging.getLogger(__name__)

SAMPLE_SET_DIR = "sample_set"
INGEST_SUMMARY = "ingest_summary.json"
PLAN_RESULTS = "plan_results.json"
ROADMAP_DUMP = "roadmap.txt"
REPORT_NAME = "report"


def _scene_dir(config: RunConfig, scene: str) -> pathlib.Path:
    return pathlib.Path(config.output_dir).expanduser() / scene


def _write_json(path: pathlib.Path, content: typing.Any) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as f:
            json.dump(content, f, indent=2, sort_keys=True)
            f.write("\n")
    except OSError as e:
        raise InputError(path, "failed to write: {}".format(e)) from e


def _read_json(path: pathlib.Path, what: str) -> typing.Any:
    if not path.is_file():
        raise InputError(path, "{} not found (run the previous stage)".format(what))
    try:
        with open(path) as f:
            return json.load(f)
    except (OSError, ValueError) as e:
        raise InputError(path, "failed to read {}: {}".format(what, e)) from e


def _load_scene_set(config: RunConfig, scene: str) -> SampleSet:
    manifest = _scene_dir(config, scene) / SAMPLE_SET_DIR / "manifest.json"
    if not manifest.is_file():
        raise InputError(manifest, "sample set not found (run synth or ingest)")
    return load_sample_set(manifest, config.ingest_settings())


def cmd_synth(config: RunConfig) -> typing.List[pathlib.Path]:
    """Draw config.n_samples samples of every scene file and write them as
    sample set bundles.

    Returns:
        The manifests written.
    """
    if not config.scene_files:
        logger.warning("no scene file configured, nothing to draw")
    written = []
    for scene in sorted(config.scene_files):
        dist = RoomDistribution.from_json(config.scene_files[scene])
        sample_set = draw_sample_set(dist, config.n_samples, config.seed)
        directory = _scene_dir(config, scene) / SAMPLE_SET_DIR
        written.append(write_sample_set(sample_set, directory))
        logger.info("scene %s: %d samples drawn", scene, sample_set.n)
    return written


def ingest_summary(scene: str, sample_set: SampleSet) -> typing.Dict[str, typing.Any]:
    points = [len(s.cloud) for s in sample_set.samples]
    return {
        "scene": scene,
        "n_samples": sample_set.n,
        "observed_points": len(sample_set.observed),
        "sample_points": {
            "min": min(points),
            "max": max(points),
            "total": sum(points),
        },
        "camera_height": sample_set.ingest.get("camera_height"),
        "inlier_ratio": sample_set.ingest.get("inlier_ratio"),
        "plane": sample_set.ingest.get("plane"),
        "icp_translations": sample_set.ingest.get("icp_translations", []),
        "warnings": list(sample_set.warnings),
    }


def cmd_ingest(config: RunConfig) -> typing.Dict[str, typing.Dict[str, typing.Any]]:
    """Ingest the manifest of every scene (the bundle written by synth for
    the scenes without manifest), write the normalized bundle and a summary.

    Returns:
        The summaries, per scene.
    """
    summaries = {}
    for scene in config.scenes():
        directory = _scene_dir(config, scene)
        if scene in config.manifests:
            source: typing.Union[str, pathlib.Path] = config.manifests[scene]
        else:
            source = directory / SAMPLE_SET_DIR / "manifest.json"
            if not source.is_file():
                raise InputError(source, "sample set not found (run synth first)")
        sample_set = load_sample_set(source, config.ingest_settings())
        write_sample_set(sample_set, directory / SAMPLE_SET_DIR)
        summary = ingest_summary(scene, sample_set)
        _write_json(directory / INGEST_SUMMARY, summary)
        summaries[scene] = summary
    return summaries


def plan_labels(config: RunConfig, sample_set: SampleSet) -> typing.List[int]:
    """config.labels, or every label of the vocabulary but the floor ones."""
    if config.labels:
        return list(config.labels)
    return sorted(
        label
        for label, name in sample_set.label_vocabulary.items()
        if name != "floor"
    )


def cmd_plan(
    config: RunConfig, label: typing.Optional[int] = None
) -> typing.Dict[str, typing.List[PlanResult]]:
    """Build the roadmap of every scene and plan for the given label (default:
    every label, see plan_labels).

    Returns:
        The plan results, per scene.
    """
    fp = config.footprint()
    all_results = {}
    for scene in config.scenes():
        sample_set = _load_scene_set(config, scene)
        labels = [label] if label is not None else plan_labels(config, sample_set)
        for requested in labels:
            sample_set.check_label(requested)
        roadmap = build_prm(
            sample_set,
            sample_set.start_configuration(),
            fp,
            n_vertices=config.n_vertices,
            seed=config.seed + 1,
            step=config.step,
            target_radius=config.target_radius,
            gamma=config.gamma,
            labels=labels,
        )
        directory = _scene_dir(config, scene)
        roadmap.dump(directory / ROADMAP_DUMP)
        results = [
            plan(
                roadmap,
                sample_set,
                requested,
                fp,
                angular_weight=config.angular_weight,
                frontier_cap=config.frontier_cap,
            )
            for requested in labels
        ]
        _write_json(
            directory / PLAN_RESULTS,
            {
                "scene": scene,
                "vocabulary": {
                    str(k): v for k, v in sorted(sample_set.label_vocabulary.items())
                },
                "results": [result.to_dict() for result in results],
            },
        )
        all_results[scene] = results
    return all_results


def _ground_truth_file(config: RunConfig, scene: str) -> typing.Optional[pathlib.Path]:
    if not config.ground_truth:
        return None
    path = pathlib.Path(config.ground_truth).expanduser()
    if path.is_dir():
        path = path / "{}.txt".format(scene)
    return path if path.is_file() else None


def _scene_kl(
    config: RunConfig,
    report: EvalReport,
    scene: str,
    results: typing.List[PlanResult],
    vocabulary: typing.Dict[int, str],
) -> None:
    path = _ground_truth_file(config, scene)
    if path is None:
        report.note("{}: no ground truth, KL omitted".format(scene))
        return
    labels = [result.label for result in results]
    if not labels:
        report.note("{}: no plan result, KL omitted".format(scene))
        return
    gt = load_ground_truth(path, vocabulary)
    missing = sorted(set(gt.labels) - set(labels))
    if missing:
        report.note(
            "{}: ground truth labels {} were not planned for, KL omitted".format(
                scene, missing
            )
        )
        return
    gt = SceneDistribution(
        tuple(labels), [gt.mass(x) if x in gt.labels else 0.0 for x in labels]
    )
    try:
        pred = SceneDistribution.from_detection(
            labels,
            [result.p_det for result in results],
            config.smoothing,
            config.epsilon,
        )
        value = kl_divergence(gt, pred, config.log_base)
    except ValueError as e:
        report.note("{}: KL omitted ({})".format(scene, e))
        return
    if pred.smoothed:
        report.note(
            "{}: zero detection probabilities smoothed with epsilon {}".format(
                scene, config.epsilon
            )
        )
    report.add_kl(scene, value)


def cmd_eval(config: RunConfig) -> EvalReport:
    """Assemble the report of every scene from its plan results and ground
    truth, and write it as CSV and JSON."""
    report = EvalReport()
    for scene in config.scenes():
        content = _read_json(_scene_dir(config, scene) / PLAN_RESULTS, "plan results")
        try:
            vocabulary = {int(k): v for k, v in content["vocabulary"].items()}
            results = [PlanResult.from_dict(d) for d in content["results"]]
        except (KeyError, TypeError, ValueError) as e:
            raise InputError(
                _scene_dir(config, scene) / PLAN_RESULTS,
                "invalid plan results: {}".format(e),
            ) from e
        report.add_results(scene, results, vocabulary)
        for result in results:
            if result.cap_hit:
                report.note(
                    "{}: search for label {} stopped at the frontier cap".format(
                        scene, result.label
                    )
                )
        _scene_kl(config, report, scene, results, vocabulary)
    output = pathlib.Path(config.output_dir).expanduser()
    output.mkdir(parents=True, exist_ok=True)
    emit_report(report, output / (REPORT_NAME + ".csv"), "csv")
    emit_report(report, output / (REPORT_NAME + ".json"), "json")
    logger.info("report written to %s", output)
    return report


def cmd_all(config: RunConfig) -> EvalReport:
    cmd_synth(config)
    cmd_ingest(config)
    cmd_plan(config)
    return cmd_eval(config)


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spatio_semantic_priors",
        description="Spatio-semantic priors from sampled workspaces: "
        "ingestion, planning and evaluation.",
        epilog="configuration keys (set with --set key=value):\n"
        + RunConfig.help_text(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument(
        "--config",
        type=str,
        help="JSON run configuration (default: the installed run_default.json, "
        "if any)",
    )
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a configuration key (repeatable)",
    )
    parser.add_argument("--log-level", type=str, help="overrides log_level")
    subparsers = parser.add_subparsers(dest="command", required=True)
    subparsers.add_parser("synth", help="draw the synthetic sample sets")
    subparsers.add_parser("ingest", help="ingest the sample set manifests")
    plan_parser = subparsers.add_parser("plan", help="plan for the labels")
    plan_parser.add_argument(
        "--label", type=int, help="plan for this label only (default: all)"
    )
    subparsers.add_parser("eval", help="write the evaluation report")
    subparsers.add_parser("all", help="synth, ingest, plan and eval")
    return parser


def load_config(
    config_file: typing.Optional[str], overrides: typing.Sequence[str]
) -> RunConfig:
    """The run configuration: config_file, else the installed default file,
    else the built-in defaults; then the overrides."""
    if config_file is None:
        try:
            config_file = RunConfig.default_path()
        except FileNotFoundError:
            pass
    return RunConfig.load(config_file, overrides)


def main(argv: typing.Optional[typing.Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    logs.init_logger()
    overrides = list(args.overrides)
    if args.log_level is not None:
        overrides.append("log_level={}".format(args.log_level))
    try:
        config = load_config(args.config, overrides)
        logs.init_logger(level=config.log_level.upper())
        logger.debug("configuration: %s", config)
        if args.command == "synth":
            cmd_synth(config)
        elif args.command == "ingest":
            cmd_ingest(config)
        elif args.command == "plan":
            cmd_plan(config, args.label)
        elif args.command == "eval":
            cmd_eval(config)
        else:
            cmd_all(config)
    except SpatioSemanticError as e:
        logger.error("%s", e)
        return e.exit_code
    except Exception:
        logger.exception("unexpected error")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
