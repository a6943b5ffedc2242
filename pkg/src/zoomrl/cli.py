"""Operator surface: one subcommand per pipeline capability.

Commands are deterministic given (inputs, seed, mock scripts). Backend and
judge endpoints accept either ``http(s)://...`` URLs or ``mock:`` specs:
``mock:stochastic`` (seeded fabricated responses), ``mock:`` (builtin
deterministic judge heuristics), or ``mock:PATH`` (a scripted JSON file).

A ``--config FILE`` JSON object supplies defaults for any long flag
(keys use underscores); explicit flags win. Exit codes: 0 success, 1 data
error, 2 usage error, 3 transport error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import judges
from .backends import Backend, HttpBackend, ScriptedBackend, StochasticMockBackend
from .errors import (
    ConfigError,
    DatasetError,
    ImageError,
    RewardJudgeError,
    StratificationError,
    TransportError,
    ZoomRLError,
)
from .evaluation import (
    EVAL_TEMPERATURE,
    EVAL_TOP_P,
    aggregate,
    evaluate_response,
    load_eval_records,
    render_table,
    report_to_dict,
    stratify,
    write_eval_records,
)
from .gradcheck import toy_policy_grad_check
from .grpo import write_group_batches
from .images import read_ppm, write_ppm
from .judges import JudgeCache, JudgeHandle, answer_judge_fn
from .parsing import BoundingBox, parse_response
from .rewards import total_reward
from .rollout import run_group, run_rollout, write_transcripts
from .types import Stage, load_samples, load_stage_config
from .zoom import ZoomConfig, execute_zoom, validate_boxes

logger = logging.getLogger("zoomrl")

EXIT_OK = 0
EXIT_DATA = 1
EXIT_USAGE = 2
EXIT_TRANSPORT = 3


def _apply_config(args: argparse.Namespace, argv: list[str]) -> argparse.Namespace:
    config_path = getattr(args, "config", None)
    if not config_path:
        return args
    try:
        with open(config_path, encoding="utf-8") as fh:
            config = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config file {config_path!r}: {exc}") from None
    if not isinstance(config, dict):
        raise ConfigError("config file must hold a JSON object")
    for key, value in config.items():
        dest = key.replace("-", "_")
        if not hasattr(args, dest):
            raise ConfigError(f"unknown config key {key!r}")
        option = "--" + dest.replace("_", "-")
        explicitly_given = any(
            token == option or token.startswith(option + "=") for token in argv
        )
        if not explicitly_given:
            setattr(args, dest, value)
    return args


def _make_backend(spec: str) -> Backend:
    if spec == "mock:stochastic":
        return StochasticMockBackend(emit_logprobs=True)
    if spec.startswith("mock:"):
        path = spec[len("mock:") :]
        if not path:
            raise ConfigError("backend mock spec needs a script path or 'stochastic'")
        try:
            with open(path, encoding="utf-8") as fh:
                return ScriptedBackend(json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read backend script {path!r}: {exc}") from None
    if spec.startswith("http://") or spec.startswith("https://"):
        return HttpBackend(spec)
    raise ConfigError(f"unrecognized backend spec {spec!r}")


def _make_judge(spec: str | None, role: str, cache: JudgeCache | None = None) -> JudgeHandle | None:
    if spec is None:
        return None
    if spec == "mock:" or spec == "mock":
        transport = judges.mock_transport_for_role(role)
    elif spec.startswith("mock:"):
        transport = judges.load_judge_script(spec[len("mock:") :], role)
    elif spec.startswith("http://") or spec.startswith("https://"):
        transport = judges.http_transport(spec)
    else:
        raise ConfigError(f"unrecognized judge spec {spec!r}")
    return JudgeHandle(role=role, transport=transport, cache=cache)


def _stage_config(args: argparse.Namespace):
    overrides: dict[str, object] = {}
    for key in ("clip_eps", "kl_beta", "group_size"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    return load_stage_config(args.stage, overrides or None)


def _dump_line(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


# --- commands -----------------------------------------------------------------


def cmd_score(args: argparse.Namespace) -> int:
    samples = {s.id: s for s in load_samples(args.samples)}
    stage_cfg = _stage_config(args)
    judge_handle = _make_judge(args.judge_url, judges.ROLE_ANSWER, JudgeCache())
    judge = answer_judge_fn(judge_handle) if judge_handle is not None else None

    failures = 0
    lines = []
    with open(args.responses, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                sample = samples.get(record["id"])
                if sample is None:
                    raise DatasetError(f"no sample with id {record['id']!r}", line=line_no)
                resp = parse_response(record["response"])
                image = read_ppm(sample.image_path)
                verdicts = validate_boxes(
                    resp.zoom_boxes_raw, image.width, image.height, args.area_limit
                )
                k = sum(1 for v in verdicts if v.valid)
                n = len(verdicts)
                breakdown = total_reward(sample, resp, k, n, stage_cfg, judge)
                lines.append(_dump_line({"id": sample.id, "rewards": breakdown.to_dict()}))
            except (DatasetError, ImageError, KeyError, json.JSONDecodeError) as exc:
                logger.error("responses line %d: %s", line_no, exc)
                failures += 1
    Path(args.out).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    print(f"scored {len(lines)} responses ({failures} failures) -> {args.out}")
    return EXIT_DATA if failures else EXIT_OK


def cmd_zoom(args: argparse.Namespace) -> int:
    image = read_ppm(args.image)
    with open(args.boxes, encoding="utf-8") as fh:
        raw_boxes = json.load(fh)
    boxes = [BoundingBox(*(float(v) for v in entry)) for entry in raw_boxes]
    config = ZoomConfig(
        area_limit=args.area_limit,
        target_min_side=args.target_min_side,
        method=args.method,
    )
    feedback, k, n = execute_zoom(image, boxes, config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    crops = []
    for j, item in enumerate(feedback.crops):
        name = f"crop_{j:02d}.ppm"
        write_ppm(item.image, out_dir / name)
        crops.append(
            {
                "index": item.index,
                "box": list(item.box.as_tuple()),
                "method_used": item.method_used,
                "path": name,
            }
        )
    verdicts = validate_boxes(boxes, image.width, image.height, args.area_limit)
    report = {
        "outcome": feedback.outcome,
        "failure_message": feedback.failure_message,
        "k": k,
        "n": n,
        "verdicts": [
            {"box": list(v.box.as_tuple()), "valid": v.valid, "reason": v.reason}
            for v in verdicts
        ],
        "crops": crops,
    }
    (out_dir / "zoom_report.json").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(f"zoom: k={k} n={n} outcome={feedback.outcome} -> {out_dir}")
    return EXIT_OK


def cmd_rollout(args: argparse.Namespace) -> int:
    samples = load_samples(args.samples)
    stage_cfg = _stage_config(args)
    backend = _make_backend(args.backend_url)
    judge_handle = _make_judge(args.judge_url, judges.ROLE_ANSWER, JudgeCache())
    judge = answer_judge_fn(judge_handle) if judge_handle is not None else None
    zoom_config = ZoomConfig(area_limit=args.area_limit, target_min_side=args.target_min_side)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    def one(indexed: tuple[int, object]):
        i, sample = indexed
        logger.info("rollout %d/%d: %s", i + 1, len(samples), sample.id)
        return run_rollout(
            backend,
            sample,
            stage_cfg,
            judge,
            zoom_config=zoom_config,
            seed=args.seed + i,
        )

    if args.parallelism > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=args.parallelism) as pool:
            transcripts = list(pool.map(one, enumerate(samples)))
    else:
        transcripts = [one(item) for item in enumerate(samples)]
    write_transcripts(
        transcripts,
        out_dir / "transcripts.jsonl",
        out_dir / "crops",
        include_timing=args.include_timing,
    )
    errors = sum(1 for t in transcripts if t.error is not None)
    print(f"rollouts: {len(transcripts)} transcripts ({errors} errored) -> {out_dir}")
    return EXIT_OK


def cmd_group(args: argparse.Namespace) -> int:
    samples = load_samples(args.samples)
    stage_cfg = _stage_config(args)
    backend = _make_backend(args.backend_url)
    judge_handle = _make_judge(args.judge_url, judges.ROLE_ANSWER, JudgeCache())
    judge = answer_judge_fn(judge_handle) if judge_handle is not None else None
    zoom_config = ZoomConfig(area_limit=args.area_limit, target_min_side=args.target_min_side)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    batches = []
    transcripts = []
    for i, sample in enumerate(samples):
        logger.info("group %d/%d: %s", i + 1, len(samples), sample.id)
        batch, group_transcripts = run_group(
            backend,
            sample,
            stage_cfg,
            judge,
            args.group_size,
            zoom_config=zoom_config,
            seed=args.seed + i,
            parallelism=args.parallelism,
        )
        transcripts.extend(group_transcripts)
        if batch is not None:
            batches.append(batch)
    write_group_batches(batches, out_dir / "groups.jsonl")
    write_transcripts(
        transcripts,
        out_dir / "transcripts.jsonl",
        out_dir / "crops",
        include_timing=args.include_timing,
    )
    print(f"groups: {len(batches)} kept of {len(samples)} -> {out_dir}")
    return EXIT_OK


def cmd_stratify(args: argparse.Namespace) -> int:
    samples = load_samples(args.samples)
    cache = JudgeCache(args.judge_cache) if args.judge_cache else JudgeCache()
    judge = _make_judge(args.judge_url, judges.ROLE_DIFFICULTY, cache)
    if judge is None:
        raise ConfigError("stratify requires --judge-url")
    counts = {"easy": 0, "medium": 0, "hard": 0}
    excluded = 0
    lines = []
    for sample in samples:
        try:
            bucket = stratify(sample, judge)
        except StratificationError as exc:
            logger.warning("excluded: %s", exc)
            excluded += 1
            continue
        counts[bucket] += 1
        lines.append(_dump_line({"id": sample.id, "bucket": bucket}))
    Path(args.out).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    print(
        f"stratified {len(lines)} samples: easy={counts['easy']} "
        f"medium={counts['medium']} hard={counts['hard']} (excluded {excluded})"
    )
    return EXIT_OK


def _generate_eval_responses(args: argparse.Namespace, samples: list) -> list[dict]:
    """Integration mode: drive the two-round harness against a live (or mock)
    backend at the near-greedy evaluation decoding settings."""
    backend = _make_backend(args.backend_url)
    stage_cfg = load_stage_config(args.stage, {"sampling_temperature": EVAL_TEMPERATURE})
    zoom_config = ZoomConfig(area_limit=args.area_limit, target_min_side=args.target_min_side)
    rows = []
    for i, sample in enumerate(samples):
        logger.info("evaluate generation %d/%d: %s", i + 1, len(samples), sample.id)
        transcript = run_rollout(
            backend,
            sample,
            stage_cfg,
            zoom_config=zoom_config,
            seed=args.seed + i,
            top_p=EVAL_TOP_P,
        )
        if transcript.error is not None:
            logger.warning("generation failed for %s: %s", sample.id, transcript.error)
            continue
        text = transcript.round1.text + transcript.round2.raw_output
        rows.append({"id": sample.id, "response": text})
    return rows


def cmd_evaluate(args: argparse.Namespace) -> int:
    if args.records:
        records = load_eval_records(args.records)
    else:
        if not args.samples or not (args.responses or args.backend_url):
            raise ConfigError(
                "evaluate needs --records, or --samples with --responses or --backend-url"
            )
        samples = {s.id: s for s in load_samples(args.samples)}
        cache = JudgeCache(args.judge_cache) if args.judge_cache else JudgeCache()
        extractor = _make_judge(args.judge_url, judges.ROLE_EXTRACTOR, cache)
        rubric = _make_judge(args.judge_url, judges.ROLE_RUBRIC, cache)
        if extractor is None or rubric is None:
            raise ConfigError("evaluate pipeline mode requires --judge-url")
        difficulty = _make_judge(args.judge_url, judges.ROLE_DIFFICULTY, cache)

        if args.responses:
            rows = []
            with open(args.responses, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        rows.append(json.loads(line))
        else:
            rows = _generate_eval_responses(args, list(samples.values()))

        records = []
        for row in rows:
            sample = samples.get(row["id"])
            if sample is None:
                raise DatasetError(f"no sample with id {row['id']!r}")
            bucket = sample.difficulty
            if bucket is None and difficulty is not None:
                try:
                    bucket = stratify(sample, difficulty)
                except StratificationError as exc:
                    logger.warning("unstratified: %s", exc)
            records.append(
                evaluate_response(
                    sample,
                    row["response"],
                    extractor,
                    rubric,
                    dataset=row.get("dataset", "all"),
                    bucket=bucket,
                )
            )
        if args.out_records:
            write_eval_records(records, args.out_records)

    report = aggregate(records)
    print(render_table(report))
    if args.out:
        Path(args.out).write_text(
            json.dumps(report_to_dict(report), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
    return EXIT_OK


def cmd_grpo_check(args: argparse.Namespace) -> int:
    try:
        worst = 0.0
        for trial in range(args.trials):
            result = toy_policy_grad_check(
                seed=args.seed + trial,
                vocab_size=args.vocab_size,
                seq_len=args.length,
                group_size=args.group_size,
                eps=args.clip_eps,
                beta=args.kl_beta,
                uniform_rewards=args.uniform_rewards,
            )
            error = result.max_rel_error
            if args.negate_loss:
                # Negative-control hook: deliberately wrong-signed analytic side.
                from .gradcheck import relative_errors

                error = float(
                    relative_errors(-result.analytic_grad, result.numeric_grad).max()
                )
            worst = max(worst, error)
            print(f"seed {args.seed + trial}: max relative gradient error {error:.3e}")
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    passed = worst < 1e-4
    print(f"grpo-check {'PASS' if passed else 'FAIL'} (worst {worst:.3e}, threshold 1e-4)")
    return EXIT_OK if passed else EXIT_DATA


# --- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="zoomrl",
        description="Two-round zoom-agent rollouts, rule-based rewards, and GRPO checks.",
    )
    parser.add_argument("--config", help="JSON file supplying defaults for any long flag")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common_stage(p: argparse.ArgumentParser) -> None:
        p.add_argument("--stage", choices=[s.value for s in Stage], default=Stage.STAGE1.value)
        p.add_argument("--clip-eps", type=float, default=None)
        p.add_argument("--kl-beta", type=float, default=None)

    score = sub.add_parser("score", help="reward report for canned responses")
    score.add_argument("--samples", required=True)
    score.add_argument("--responses", required=True)
    score.add_argument("--out", required=True)
    score.add_argument("--judge-url", default=None)
    score.add_argument("--area-limit", type=float, default=0.40)
    common_stage(score)
    score.set_defaults(func=cmd_score)

    zoomp = sub.add_parser("zoom", help="validate, crop, and upscale boxes on one image")
    zoomp.add_argument("--image", required=True)
    zoomp.add_argument("--boxes", required=True, help="JSON file: [[x1,y1,x2,y2], ...]")
    zoomp.add_argument("--out", required=True)
    zoomp.add_argument("--area-limit", type=float, default=0.40)
    zoomp.add_argument("--target-min-side", type=int, default=448)
    zoomp.add_argument("--method", choices=["nearest", "bilinear"], default="nearest")
    zoomp.set_defaults(func=cmd_zoom)

    rollout = sub.add_parser("rollout", help="two-round rollouts over a sample file")
    rollout.add_argument("--samples", required=True)
    rollout.add_argument("--backend-url", required=True)
    rollout.add_argument("--judge-url", default=None)
    rollout.add_argument("--out", required=True)
    rollout.add_argument("--seed", type=int, default=0)
    rollout.add_argument("--parallelism", type=int, default=os.cpu_count() or 1)
    rollout.add_argument("--area-limit", type=float, default=0.40)
    rollout.add_argument("--target-min-side", type=int, default=448)
    rollout.add_argument(
        "--include-timing",
        action="store_true",
        help="record wall-clock timings (breaks byte reproducibility)",
    )
    common_stage(rollout)
    rollout.set_defaults(func=cmd_rollout)

    group = sub.add_parser("group", help="G rollouts per sample with advantages")
    group.add_argument("--samples", required=True)
    group.add_argument("--backend-url", required=True)
    group.add_argument("--judge-url", default=None)
    group.add_argument("--out", required=True)
    group.add_argument("--seed", type=int, default=0)
    group.add_argument("--group-size", type=int, default=16)
    group.add_argument("--parallelism", type=int, default=os.cpu_count() or 1)
    group.add_argument("--area-limit", type=float, default=0.40)
    group.add_argument("--target-min-side", type=int, default=448)
    group.add_argument(
        "--include-timing",
        action="store_true",
        help="record wall-clock timings (breaks byte reproducibility)",
    )
    common_stage(group)
    group.set_defaults(func=cmd_group)

    strat = sub.add_parser("stratify", help="difficulty buckets via the vision judge")
    strat.add_argument("--samples", required=True)
    strat.add_argument("--judge-url", required=True)
    strat.add_argument("--judge-cache", default=None)
    strat.add_argument("--out", required=True)
    strat.set_defaults(func=cmd_stratify)

    evaluate = sub.add_parser("evaluate", help="aggregate eval records or run the judge pipeline")
    evaluate.add_argument("--records", default=None)
    evaluate.add_argument("--samples", default=None)
    evaluate.add_argument("--responses", default=None)
    evaluate.add_argument("--backend-url", default=None,
                          help="generate answers via the two-round harness first")
    evaluate.add_argument("--judge-url", default=None)
    evaluate.add_argument("--judge-cache", default=None)
    evaluate.add_argument("--stage", choices=[s.value for s in Stage],
                          default=Stage.STAGE2.value)
    evaluate.add_argument("--seed", type=int, default=0)
    evaluate.add_argument("--area-limit", type=float, default=0.40)
    evaluate.add_argument("--target-min-side", type=int, default=448)
    evaluate.add_argument("--out", default=None)
    evaluate.add_argument("--out-records", default=None)
    evaluate.set_defaults(func=cmd_evaluate)

    check = sub.add_parser("grpo-check", help="analytic vs finite-difference gradients")
    check.add_argument("--seed", type=int, default=0)
    check.add_argument("--trials", type=int, default=1)
    check.add_argument("--vocab-size", type=int, default=32)
    check.add_argument("--length", type=int, default=8)
    check.add_argument("--group-size", type=int, default=16)
    check.add_argument("--clip-eps", type=float, default=0.2)
    check.add_argument("--kl-beta", type=float, default=0.04)
    check.add_argument(
        "--uniform-rewards",
        action="store_true",
        help="force equal rewards (zero advantages) for the degenerate case",
    )
    check.add_argument("--negate-loss", action="store_true", help=argparse.SUPPRESS)
    check.set_defaults(func=cmd_grpo_check)

    return parser


def main(argv: list[str] | None = None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        args = _apply_config(args, argv)
        return args.func(args)
    except (TransportError, RewardJudgeError) as exc:
        logger.error("transport failure: %s", exc)
        return EXIT_TRANSPORT
    except ConfigError as exc:
        logger.error("configuration error: %s", exc)
        return EXIT_USAGE
    except (DatasetError, ImageError, ZoomRLError) as exc:
        logger.error("data error: %s", exc)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
