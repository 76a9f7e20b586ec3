"""Command-line interface.

Exit codes: 0 success, 2 usage error (argparse), 3 domain error (prints
the machine error code), 4 phase halted awaiting human annotation.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .corpus import CorpusProfile, build_corpus
from .errors import AnnotationIncomplete, SpeclintError
from .learner import EnsembleRunner, apply_triage, phase_config_from_manifest, run_phase
from .pairing import PairScope, filter_boilerplate, filter_scope, generate_scope_pairs
from .store import (
    STATE_CONFIGURED,
    STATE_PAIRED,
    ProjectManifest,
    Project,
    init_project,
    load_project,
    utc_now,
)
from .taxonomy import NLILabel, map_nli_to_consistency

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DOMAIN = 3
EXIT_AWAITING = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="speclint", description=__doc__)
    parser.add_argument("-P", "--project", default=".", help="project directory")
    sub = parser.add_subparsers(dest="command", required=True)

    p_init = sub.add_parser("init", help="create a project directory from a config file")
    p_init.add_argument("--config", required=True, help="JSON config with corpora/scopes/members")

    p_ingest = sub.add_parser("ingest", help="register a raw document for a corpus")
    p_ingest.add_argument("corpus_id")
    p_ingest.add_argument("file")

    sub.add_parser("segment", help="clean, quantize and dedupe all ingested corpora")

    p_pair = sub.add_parser("pair", help="generate and band-filter the pair space of a scope")
    p_pair.add_argument("scope")
    p_pair.add_argument("--psi-min", type=float, default=None)
    p_pair.add_argument("--psi-max", type=float, default=None)
    p_pair.add_argument("--max-pattern-count", type=int, default=3)
    p_pair.add_argument(
        "--export-vectors", action="store_true",
        help="also write vectors/<corpus>.jsonl under the scope vocabulary",
    )

    p_phase = sub.add_parser("phase", help="drive the active-learning loop")
    phase_sub = p_phase.add_subparsers(dest="phase_command", required=True)
    p_run = phase_sub.add_parser("run", help="run (or resume) one phase")
    p_run.add_argument("n", type=int)
    phase_sub.add_parser("status", help="show phase state and pending annotations")

    sub.add_parser("predict", help="predict and vote on all candidate pairs (no retraining)")

    p_report = sub.add_parser("report", help="print the latest phase report")
    p_report.add_argument("--format", choices=("json", "text"), default="text")

    p_export = sub.add_parser("export", help="export decisions joined with segment text")
    p_export.add_argument("--verdict", choices=("inconsistent", "consistent"), default="inconsistent")

    p_triage = sub.add_parser("triage", help="record the manual triage of a result pair")
    p_triage.add_argument("pair_id")
    p_triage.add_argument("status", choices=("confirmed", "context_fp"))

    p_serve = sub.add_parser("serve", help="run the annotation/triage HTTP service")
    p_serve.add_argument("--port", type=int, default=8173)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--ui", default=None, help="directory with the built web console")

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except AnnotationIncomplete as error:
        print(f"awaiting_annotation: {error.message}", file=sys.stderr)
        return EXIT_AWAITING
    except SpeclintError as error:
        print(f"error {error.code}: {error.message}", file=sys.stderr)
        return EXIT_DOMAIN


def _dispatch(args: argparse.Namespace) -> int:
    root = Path(args.project)
    if args.command == "init":
        return _cmd_init(root, Path(args.config))

    project = load_project(root)
    try:
        if args.command == "ingest":
            return _cmd_ingest(project, args.corpus_id, Path(args.file))
        if args.command == "segment":
            return _cmd_segment(project)
        if args.command == "pair":
            return _cmd_pair(
                project, args.scope, args.psi_min, args.psi_max,
                args.max_pattern_count, args.export_vectors,
            )
        if args.command == "phase":
            if args.phase_command == "run":
                return _cmd_phase_run(project, args.n)
            return _cmd_phase_status(project)
        if args.command == "predict":
            return _cmd_predict(project)
        if args.command == "report":
            return _cmd_report(project, args.format)
        if args.command == "export":
            return _cmd_export(project, args.verdict)
        if args.command == "triage":
            return _cmd_triage(project, args.pair_id, args.status)
        if args.command == "serve":
            from .service.app import serve

            serve(project, port=args.port, host=args.host, static_dir=args.ui)
            return EXIT_OK
        raise AssertionError(f"unhandled command {args.command}")
    finally:
        project.close()


def _cmd_init(root: Path, config_path: Path) -> int:
    config = json.loads(config_path.read_text(encoding="utf-8"))
    manifest = ProjectManifest(
        project_id=config["project_id"],
        created_at=utc_now(),
        corpora=[CorpusProfile.from_dict(c) for c in config["corpora"]],
        scopes=[PairScope.from_dict(s) for s in config["scopes"]],
        bands={k: tuple(v) for k, v in config.get("bands", {}).items()},
        members=config.get("members", []),
        k_phases=config.get("k_phases", 3),
        sample_size=config.get("sample_size", 150),
        confidence_threshold=config.get("confidence_threshold", 0.6),
        sampling_strategy=config.get("sampling_strategy", "uncertainty_stratified"),
    )
    project = init_project(root, manifest)
    project.close()
    print(f"initialized project {manifest.project_id} at {root}")
    return EXIT_OK


def _cmd_ingest(project: Project, corpus_id: str, file: Path) -> int:
    raw = file.read_text(encoding="utf-8")
    project.save_corpus_text(corpus_id, raw)
    print(f"ingested {file} as corpus {corpus_id} ({len(raw)} chars)")
    return EXIT_OK


def _cmd_segment(project: Project) -> int:
    for profile in project.manifest.corpora:
        text_path = project.corpus_text_path(profile.corpus_id)
        if not text_path.exists():
            print(f"skipping {profile.corpus_id}: not ingested yet")
            continue
        corpus = build_corpus(text_path.read_text(encoding="utf-8"), profile)
        project.save_segments(profile.corpus_id, corpus.segments)
        print(f"{profile.corpus_id}: {len(corpus.segments)} unique segments")
    return EXIT_OK


def _cmd_pair(
    project: Project,
    scope_name: str,
    psi_min: float | None,
    psi_max: float | None,
    max_pattern_count: int,
    export_vectors: bool = False,
) -> int:
    scope = next((s for s in project.manifest.scopes if s.name == scope_name), None)
    if scope is None:
        raise SpeclintError(f"scope {scope_name!r} is not declared in the manifest")
    band = project.manifest.bands.get(scope_name, (0.65, 0.99))
    lo = psi_min if psi_min is not None else band[0]
    hi = psi_max if psi_max is not None else band[1]

    scope_pairs = generate_scope_pairs(scope, project.segments)
    survivors, summary = filter_scope(scope_pairs, lo, hi)
    survivors = filter_boilerplate(survivors, project.segment_text, max_pattern_count)
    project.save_pairs(scope_name, survivors, summary)
    if export_vectors:
        for corpus_id in scope.corpus_ids():
            project.save_vectors(
                corpus_id,
                [scope_pairs.vectors[s.segment_id] for s in project.segments[corpus_id]],
            )
    if project.manifest.phase_state["status"] == STATE_CONFIGURED:
        project.set_phase_state(0, STATE_PAIRED)

    kept = sum(1 for p in survivors if p.status == "candidate")
    print(
        f"scope {scope_name}: {summary.segments} segments, "
        f"{summary.all_possible_count} possible datapoints, "
        f"{summary.survivors} in band [{lo}, {hi}] "
        f"(reduction ~{summary.reduction_factor:.0f}x), {kept} after boilerplate pass"
    )
    return EXIT_OK


def _cmd_phase_run(project: Project, n: int) -> int:
    runner = EnsembleRunner(project)
    outcome = run_phase(project, phase_config_from_manifest(project, n), runner)
    if outcome.status == "awaiting_annotation":
        print(f"phase {n} sampled {outcome.pending} pairs; awaiting annotation")
        return EXIT_AWAITING
    metrics = outcome.report["metrics_ensemble"]
    print(
        f"phase {n} complete: accuracy {metrics['accuracy']:.4f}, "
        f"macro-F1 {metrics['macro_f1']:.4f}, "
        f"{outcome.report['results_selected']} result(s) selected"
    )
    return EXIT_OK


def _cmd_phase_status(project: Project) -> int:
    state = project.manifest.phase_state
    pending = len(project.pending_pairs(state["current_phase"]))
    print(f"{project.phase_label()} (pending annotations: {pending})")
    return EXIT_OK


def _cmd_predict(project: Project) -> int:
    runner = EnsembleRunner(project)
    phase = project.manifest.phase_state["current_phase"]
    decisions, _ = runner.predict_decisions(phase)
    preview = project.path / "decisions-preview.jsonl"
    preview.write_text(
        "".join(json.dumps(d.to_dict(), sort_keys=True) + "\n" for d in decisions),
        encoding="utf-8",
    )
    contradictions = sum(1 for d in decisions if d.final.value == "contradiction")
    print(f"{len(decisions)} pairs scored, {contradictions} voted contradiction -> {preview}")
    return EXIT_OK


def _cmd_report(project: Project, fmt: str) -> int:
    state = project.manifest.phase_state
    for phase in range(state["current_phase"], -1, -1):
        path = project.phase_dir(phase) / "report.json"
        if path.exists():
            if fmt == "json":
                sys.stdout.write(path.read_text(encoding="utf-8"))
            else:
                report = json.loads(path.read_text(encoding="utf-8"))
                metrics = report["metrics_ensemble"]
                print(f"phase {report['phase_index']}")
                print(f"  train size      {report['train_size']} (+{report['synthetic_size']} synthetic)")
                print(f"  accuracy        {metrics['accuracy']:.4f}")
                print(f"  macro precision {metrics['macro_precision']:.4f}")
                print(f"  macro recall    {metrics['macro_recall']:.4f}")
                print(f"  macro F1        {metrics['macro_f1']:.4f}")
                print(f"  results         {report['results_selected']}")
            return EXIT_OK
    raise SpeclintError("no phase report exists yet")


def _cmd_export(project: Project, verdict: str) -> int:
    state = project.manifest.phase_state
    decisions: list[dict] = []
    for phase in range(state["current_phase"], -1, -1):
        decisions = project.read_phase_decisions(phase)
        if decisions:
            break
    count = 0
    for record in decisions:
        row_verdict = map_nli_to_consistency(NLILabel(record["final"])).value
        if row_verdict != verdict:
            continue
        pos = project.pairs[record["pair_id"]]
        print(
            json.dumps(
                {
                    "pair_id": pos.pair_id,
                    "verdict": row_verdict,
                    "confidence": record["confidence"],
                    "psi": pos.psi,
                    "status": pos.status,
                    "segment_a": project.segments_by_id[pos.segment_a].to_dict(),
                    "segment_b": project.segments_by_id[pos.segment_b].to_dict(),
                },
                sort_keys=True,
            )
        )
        count += 1
    print(f"exported {count} {verdict} pair(s)", file=sys.stderr)
    return EXIT_OK


def _cmd_triage(project: Project, pair_id: str, status: str) -> int:
    new_status, confirmed, context_fp = apply_triage(project, pair_id, status)
    print(f"{pair_id} -> {new_status} (confirmed: {confirmed}, context_fp: {context_fp})")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
