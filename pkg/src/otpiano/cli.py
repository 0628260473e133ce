"""Batch command-line frontend: annotate songs, evaluate rollouts, corpus stats.

Subcommands write files and text/CSV reports for downstream programs; there
is no interactive mode.  Exit codes: 0 success, 1 songs failed strict
annotation, 2 unusable inputs.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .annotate import (
    DEFAULT_EPISODE_LEN,
    FingeringAnnotation,
    InfeasibleStepError,
    annotate_song,
    annotation_to_pig,
    chunk_episodes,
    score_annotation,
    write_annotation_text,
)
from .assign import InfeasibleError, build_cost_matrix, format_debug_table, solve_assignment
from .config import load_config
from .hand import HandConfig, init_hands
from .keyboard import KeyboardGeometry, KeyState, is_black, key_for_pitch, pitch_for_key
from .metrics import (
    DEFAULT_PRESS_THRESHOLD,
    F1_THRESHOLDS,
    KeyPressTrace,
    TraceStep,
    dataset_stats,
    f1,
    fingering_agreement,
    precision_recall,
)
from .midi import (
    ACTION_DIM,
    DEFAULT_DT,
    DEFAULT_LOOKAHEAD,
    DEFAULT_STRETCH,
    HAND_STATE_DIM,
    EmptySongError,
    GoalSequence,
    MalformedMidiError,
    assemble_observation,
    discretize,
    goal_from_text,
    goal_to_text,
    goal_vector,
    load_midi,
)
from .pig import load_pig, save_pig
from .reward import DEFAULT_PARAMS, RewardParams
from .store import (
    EPISODE_SUFFIX,
    EpisodeRecord,
    get_importer,
    rewards_csv,
    save_episode,
    score_csv,
)

_MIDI_SUFFIXES = (".mid", ".midi")


def _load_geometry(path) -> KeyboardGeometry:
    if path is None:
        return KeyboardGeometry()
    return KeyboardGeometry.from_mapping(load_config(path))


def _load_embodiment(spec: str) -> HandConfig:
    if spec in ("default", "ten-finger"):
        return HandConfig.default()
    if spec == "four-finger":
        return HandConfig.four_finger()
    path = Path(spec)
    if not path.exists():
        raise FileNotFoundError(f"embodiment {spec!r} is neither a builtin name nor a config file")
    return HandConfig.from_mapping(load_config(path))


def _load_reward_params(path) -> RewardParams:
    if path is None:
        return DEFAULT_PARAMS
    return RewardParams.from_mapping(load_config(path))


def _midi_paths(root: Path) -> list:
    if root.is_dir():
        return sorted(p for p in root.iterdir() if p.suffix.lower() in _MIDI_SUFFIXES)
    return [root]


def _snapshot_comments(snapshot: dict) -> list:
    return [f"{key} = {snapshot[key]}" for key in sorted(snapshot)]


# ---------------------------------------------------------------------------
# annotate
# ---------------------------------------------------------------------------


def build_episode_record(
    episode,
    goals: GoalSequence,
    annotation: FingeringAnnotation,
    params: RewardParams,
    song: str,
    lookahead: int = DEFAULT_LOOKAHEAD,
    run_snapshot: "dict | None" = None,
) -> EpisodeRecord:
    """Synthesize a trajectory record from one annotated episode.

    Observations carry the real goal window (looking across episode
    boundaries, zero past the song end), idealized key depths from the
    reached keys, and the surrogate fingertip trace; the 46-dim hand state
    and 39-dim actions are opaque in this pipeline and stay zero.  With the
    default 10-step lookahead the record is canonical (1144-dim).
    """
    L = lookahead + 1
    T = episode.length
    song_len = len(goals.steps)
    obs = np.zeros((T, L * 89 + 165), dtype=np.float32)
    for t in range(T):
        g = episode.start_step + t
        vec = goal_vector(goals, g, L)
        if g < song_len:
            step = annotation.steps[g]
            depths = [0.0] * 88
            for key in step.pressed:
                depths[key] = 1.0
            sustain = float(goals.steps[g].sustain)
            tips = annotation.fingertip_trace[g]
        else:
            depths = [0.0] * 88
            sustain = 0.0
            tips = np.zeros((10, 3))
        obs[t] = assemble_observation(vec, KeyState(depths=tuple(depths), sustain=sustain), tips, np.zeros(HAND_STATE_DIM))

    ep_goals = GoalSequence(steps=episode.goal_steps, dt=goals.dt)
    ep_annotation = FingeringAnnotation(
        steps=episode.annotation_steps, dt=goals.dt, embodiment=annotation.embodiment
    )
    breakdown = score_annotation(ep_goals, ep_annotation, params)
    rewards = np.array([b.total for b in breakdown], dtype=np.float32)

    trace = KeyPressTrace(
        steps=tuple(TraceStep(pressed=s.pressed, active=g.active) for s, g in zip(episode.annotation_steps, episode.goal_steps))
    )
    precision, recall = precision_recall(trace)
    snapshot = run_snapshot if run_snapshot is not None else annotation.snapshot
    meta = {
        "song": song,
        "chunk": episode.index,
        "n_real": episode.n_real,
        "f1": f1(precision, recall),
        "embodiment": annotation.embodiment,
        "config": {k: str(v) for k, v in sorted(snapshot.items())},
        "otpiano_version": __version__,
    }
    return EpisodeRecord(
        observations=obs,
        actions=np.zeros((T, ACTION_DIM), dtype=np.float32),
        rewards=rewards,
        meta=meta,
    )


def _process_song(task: dict) -> dict:
    """Annotate one MIDI file and write all outputs; returns a summary dict."""
    path = Path(task["path"])
    out_dir = Path(task["out"])
    geom = task["geom"]
    hands = task["hands"]
    params = task["params"]
    stem = path.stem
    try:
        song = load_midi(path)
        goals = discretize(
            song.notes,
            dt=task["dt"],
            stretch=task["stretch"],
            trim_silence=task["trim_silence"],
            pedal=song.pedal,
        )
        annotation = annotate_song(goals, hands, geom, params, best_effort=task["best_effort"])
        run_extra = {
            "midi.stretch": task["stretch"],
            "midi.trim_silence": task["trim_silence"],
            "run.lookahead": task["lookahead"],
            "run.episode_len": task["episode_len"],
            "run.best_effort": task["best_effort"],
        }
        run_snapshot = {**annotation.snapshot, **run_extra}
        comments = _snapshot_comments(run_snapshot)
        (out_dir / f"{stem}.goals.txt").write_text(
            "".join(f"# {c}\n" for c in comments) + goal_to_text(goals), encoding="utf-8"
        )
        (out_dir / f"{stem}.annotation.txt").write_text(
            write_annotation_text(annotation, extra_snapshot=run_extra), encoding="utf-8"
        )
        breakdown = score_annotation(goals, annotation, params)
        (out_dir / f"{stem}.rewards.csv").write_text(
            "".join(f"# {c}\n" for c in comments) + score_csv(breakdown), encoding="utf-8"
        )
        if task["pig_out"]:
            records = annotation_to_pig(
                annotation,
                song.notes,
                stretch=task["stretch"],
                trim_silence=task["trim_silence"],
                on_unlabeled="skip" if task["best_effort"] else "error",
            )
            save_pig(records, out_dir / f"{stem}.pig.txt", header_comments=comments)
        episodes = chunk_episodes(goals, annotation, task["episode_len"])
        for episode in episodes:
            record = build_episode_record(
                episode, goals, annotation, params, stem, lookahead=task["lookahead"], run_snapshot=run_snapshot
            )
            save_episode(record, out_dir / f"{stem}.ep{episode.index:03d}{EPISODE_SUFFIX}")
    except (MalformedMidiError, EmptySongError, InfeasibleStepError, OSError) as exc:
        return {"song": stem, "error": f"{type(exc).__name__}: {exc}"}
    return {
        "song": stem,
        "steps": len(goals.steps),
        "mean_d_ot": annotation.mean_distance,
        "dropped_steps": annotation.dropped_step_count,
        "episodes": len(episodes),
        "problems": list(song.problems),
    }


def cmd_annotate(args) -> int:
    paths = _midi_paths(Path(args.midi))
    if not paths:
        print(f"no MIDI files under {args.midi}", file=sys.stderr)
        return 2
    if args.dt <= 0 or args.stretch <= 0 or args.episode_len <= 0 or args.lookahead < 0 or args.jobs < 1:
        print("dt, stretch and episode-len must be positive; lookahead >= 0; jobs >= 1", file=sys.stderr)
        return 2
    try:
        geom = _load_geometry(args.geometry)
        hands = _load_embodiment(args.embodiment)
        params = _load_reward_params(args.reward_config)
    except (OSError, ValueError) as exc:
        print(f"bad configuration: {exc}", file=sys.stderr)
        return 2
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    tasks = [
        {
            "path": str(p),
            "out": str(out_dir),
            "geom": geom,
            "hands": hands,
            "params": params,
            "dt": args.dt,
            "stretch": args.stretch,
            "trim_silence": not args.no_trim_silence,
            "best_effort": args.best_effort,
            "episode_len": args.episode_len,
            "lookahead": args.lookahead,
            "pig_out": args.pig_out,
        }
        for p in paths
    ]
    if args.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_process_song, tasks))
    else:
        results = [_process_song(t) for t in tasks]

    failures = []
    for res in sorted(results, key=lambda r: r["song"]):
        if "error" in res:
            failures.append(res)
            print(f"FAIL {res['song']}: {res['error']}", file=sys.stderr)
            continue
        print(
            f"{res['song']}\tsteps={res['steps']}\tmean_d_ot={res['mean_d_ot']:.6f}"
            f"\tdropped_steps={res['dropped_steps']}\tepisodes={res['episodes']}"
        )
        for problem in res["problems"]:
            print(f"  note: {problem}", file=sys.stderr)
    if failures:
        print(f"{len(failures)} of {len(results)} songs failed", file=sys.stderr)
        return 1
    return 0


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------


def cmd_eval(args) -> int:
    if args.episodes is None and not (args.pig_ours and args.pig_human):
        print("eval needs --episodes or both --pig-ours and --pig-human", file=sys.stderr)
        return 2

    if args.episodes is not None:
        directory = Path(args.episodes)
        if not directory.is_dir():
            print(f"not a directory: {directory}", file=sys.stderr)
            return 2
        try:
            importer = get_importer(args.importer)(directory)
            records = list(importer.episodes())
        except Exception as exc:
            print(f"cannot read episodes: {exc}", file=sys.stderr)
            return 2
        if not records:
            print(f"no episode files under {directory}", file=sys.stderr)
            return 2
        by_song: dict = {}
        for rec in records:
            by_song.setdefault(str(rec.meta.get("song", "?")), []).append(rec)
        rows = []
        all_steps = []
        for song in sorted(by_song):
            steps = []
            for rec in by_song[song]:
                for pressed, active in zip(rec.pressed_key_steps(args.press_threshold), rec.active_key_steps()):
                    steps.append(TraceStep(pressed=pressed, active=active))
            all_steps.extend(steps)
            precision, recall = precision_recall(KeyPressTrace(steps=tuple(steps)))
            rows.append((song, precision, recall, f1(precision, recall)))
        precision, recall = precision_recall(KeyPressTrace(steps=tuple(all_steps)))
        rows.append(("OVERALL", precision, recall, f1(precision, recall)))
        print("song\tprecision\trecall\tf1")
        for song, precision, recall, score in rows:
            print(f"{song}\t{precision:.6f}\t{recall:.6f}\t{score:.6f}")
        eval_snapshot = f"# press_threshold = {args.press_threshold}\n# importer = {args.importer}\n"
        if args.csv:
            lines = ["song,precision,recall,f1"]
            lines += [f"{s},{p!r},{r!r},{v!r}" for s, p, r, v in rows]
            Path(args.csv).write_text(eval_snapshot + "\n".join(lines) + "\n", encoding="utf-8")
        if args.rewards_csv:
            Path(args.rewards_csv).write_text(eval_snapshot + rewards_csv(records), encoding="utf-8")
        return 0

    try:
        ours = load_pig(args.pig_ours)
        reference = load_pig(args.pig_human)
    except (OSError, ValueError) as exc:
        print(f"cannot read PIG file: {exc}", file=sys.stderr)
        return 2
    try:
        result = fingering_agreement(ours, reference, onset_tolerance=args.onset_tolerance)
    except ValueError as exc:
        print(f"agreement undefined: {exc}", file=sys.stderr)
        return 2
    print(
        f"agreement={result.agreement:.6f}\tmatched={result.matched}"
        f"\tunmatched_ours={result.unmatched_ours}\tunmatched_human={result.unmatched_reference}"
    )
    return 0


# ---------------------------------------------------------------------------
# stats
# ---------------------------------------------------------------------------


def cmd_stats(args) -> int:
    directory = Path(args.input)
    if not directory.is_dir():
        print(f"not a directory: {directory}", file=sys.stderr)
        return 2
    sources = []
    f1_scores = []
    try:
        goal_songs = set()
        for path in sorted(directory.glob("*.goals.txt")):
            sources.append(goal_from_text(path.read_text(encoding="utf-8")))
            goal_songs.add(path.name[: -len(".goals.txt")])
        for rec in get_importer(args.importer)(directory).episodes():
            # goal files already cover this song; episodes only add F1 metadata
            if str(rec.meta.get("song", "")) not in goal_songs:
                sources.append(rec)
            if args.f1_meta and "f1" in rec.meta:
                f1_scores.append(float(rec.meta["f1"]))
    except (OSError, ValueError, KeyError) as exc:
        print(f"cannot read inputs: {exc}", file=sys.stderr)
        return 2
    if not sources:
        print(f"no goal or episode files under {directory}", file=sys.stderr)
        return 2
    stats = dataset_stats(sources, f1_scores=f1_scores or None, count_mode=args.count_mode)

    print(f"pieces: {len(stats.active_key_counts)}")
    print(f"key presses counted ({stats.count_mode}): {stats.total_onsets}")
    print(f"white fraction: {stats.white_fraction:.6f}")
    if stats.active_key_counts:
        counts = stats.active_key_counts
        print(f"active keys per piece: min={min(counts)} mean={sum(counts) / len(counts):.1f} max={max(counts)}")
    for threshold in F1_THRESHOLDS:
        print(f"fraction f1 >= {threshold}: {stats.fraction_f1_above(threshold):.6f}")
    if args.csv:
        lines = [f"# count_mode = {stats.count_mode}", "key,midi_pitch,color,count"]
        for key, count in enumerate(stats.key_histogram):
            color = "black" if is_black(key) else "white"
            lines.append(f"{key},{pitch_for_key(key)},{color},{count}")
        Path(args.csv).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return 0


# ---------------------------------------------------------------------------
# debug-assign
# ---------------------------------------------------------------------------


def cmd_debug_assign(args) -> int:
    try:
        pitches = [int(p) for p in args.pitches.split(",") if p]
        keys = {key_for_pitch(p) for p in pitches}
        geom = _load_geometry(args.geometry)
        hands = _load_embodiment(args.embodiment)
    except (OSError, ValueError) as exc:
        print(f"bad inputs: {exc}", file=sys.stderr)
        return 2
    if not keys:
        print("need at least one pitch", file=sys.stderr)
        return 2
    state = init_hands(hands, geom)
    matrix = build_cost_matrix(state.fingertips, state.fingers, keys, geom)
    try:
        solution = solve_assignment(matrix, best_effort=args.best_effort)
    except InfeasibleError as exc:
        print(f"infeasible chord: {exc} (use --best-effort to drop keys)", file=sys.stderr)
        return 1
    print(format_debug_table(matrix, solution))
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


_FORMAT_NOTES = """\
output formats:
  <song>.annotation.txt   one line per step: step<TAB>ot_distance<TAB>key:finger;...
                          (finger labels L1..L5 / R1..R5, ':-' marks a dropped key);
                          '#' header lines carry the full config snapshot
  <song>.goals.txt        one line per step: step<TAB>sustain<TAB>key,key,...
  <song>.rewards.csv      columns: step,ot,press,sustain,collision,energy,total
  <song>.epNNN.rp1t       binary episode container (observations/actions/rewards + JSON meta)
  <song>.pig.txt          PIG v1 fingering records (tab-separated, '//' headers)
  eval --csv              columns: song,precision,recall,f1 (last row OVERALL)
  eval --rewards-csv      columns: song,chunk,step,reward,f1
  stats --csv             columns: key,midi_pitch,color,count
"""


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="otpiano",
        description="Annotate piano fingering by optimal transport and manage rollout datasets.",
        epilog=_FORMAT_NOTES,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"otpiano {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("annotate", help="annotate MIDI songs and write episode containers")
    p.add_argument("--midi", required=True, help="MIDI file or directory of files")
    p.add_argument("--embodiment", default="ten-finger", help="builtin name (ten-finger, four-finger) or config path")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--geometry", default=None, help="keyboard geometry config path")
    p.add_argument("--reward-config", default=None, help="reward parameter config path")
    p.add_argument("--stretch", type=float, default=DEFAULT_STRETCH, help="time stretch factor")
    p.add_argument("--dt", type=float, default=DEFAULT_DT, help="control timestep in seconds")
    p.add_argument("--lookahead", type=int, default=DEFAULT_LOOKAHEAD, help="future goal steps in observations")
    p.add_argument("--episode-len", type=int, default=DEFAULT_EPISODE_LEN, help="steps per episode chunk")
    p.add_argument("--best-effort", action="store_true", help="drop excess chord keys instead of failing")
    p.add_argument("--pig-out", action="store_true", help="also write PIG fingering files")
    p.add_argument("--no-trim-silence", action="store_true", help="keep leading silence")
    p.add_argument("--jobs", type=int, default=1, help="parallel song workers")
    p.set_defaults(func=cmd_annotate)

    p = sub.add_parser("eval", help="score rollouts (F1) or compare fingering files")
    p.add_argument("--episodes", default=None, help="directory of episode containers")
    p.add_argument("--importer", default="native", help="episode importer scheme")
    p.add_argument("--press-threshold", type=float, default=DEFAULT_PRESS_THRESHOLD, help="key depth counted as pressed")
    p.add_argument("--pig-ours", default=None, help="our PIG fingering file")
    p.add_argument("--pig-human", default=None, help="reference PIG fingering file")
    p.add_argument("--onset-tolerance", type=float, default=0.05, help="note matching tolerance in seconds")
    p.add_argument("--csv", default=None, help="write per-piece results as CSV")
    p.add_argument("--rewards-csv", default=None, help="write per-step rewards with F1 metadata as CSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("stats", help="corpus statistics over goal files and episodes")
    p.add_argument("--in", dest="input", required=True, help="directory of *.goals.txt / episode files")
    p.add_argument("--importer", default="native", help="episode importer scheme")
    p.add_argument("--f1-meta", action="store_true", help="collect F1 scores from episode metadata")
    p.add_argument("--count-mode", choices=("onsets", "steps"), default="onsets", help="histogram counting rule")
    p.add_argument("--csv", default=None, help="write the key histogram as CSV")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("debug-assign", help="print the cost matrix and solution for a chord")
    p.add_argument("--pitches", required=True, help="comma-separated MIDI pitches")
    p.add_argument("--embodiment", default="ten-finger")
    p.add_argument("--geometry", default=None)
    p.add_argument("--best-effort", action="store_true")
    p.set_defaults(func=cmd_debug_assign)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
