"""Command-line front end: ``fhmm-decode {build-graph,generate,decode,score}``.

Every option can also be given in a ``key = value`` config file passed with
``--config``; command-line flags win over the file.  Keys use the option's
long name with dashes or underscores (``max-sweeps`` / ``max_sweeps``).
For ``generate`` the file may additionally hold any generator setting.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import fields
from pathlib import Path

from .errors import ConfigurationError, DecodeToolkitError, ValidationError
from .graph import (build_graph, paper_lexicon_paths, read_grammar, read_graph, read_lexicon,
                    validate_graph, write_graph)
from .lbp import LbpConfig
from .pipeline import MODES, decode
from .posteriors import read_posterior_file
from .scoring import as_streams, corpus_score, read_transcripts, write_transcripts
from .synthgen import GenConfig, generate_corpus, read_manifest

EXIT_IO = 2


def read_config_file(path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep or not key.strip():
                raise ConfigurationError(f"{path}:{lineno}: expected 'key = value'")
            values[key.strip().replace("-", "_")] = value.strip()
    return values


# -- subcommands ---------------------------------------------------------------

def cmd_build_graph(args) -> int:
    default_lex, default_phones, default_grammar = paper_lexicon_paths()
    lexicon = read_lexicon(args.lexicon or default_lex, args.phones or default_phones)
    weights = read_grammar(args.grammar or default_grammar)
    graph = build_graph(lexicon, weights, silence_prob=args.silence_prob)
    violations = validate_graph(graph)
    if violations:
        for v in violations:
            print(v, file=sys.stderr)
        raise ValidationError(f"graph failed validation with {len(violations)} violation(s)")
    write_graph(graph, args.out)
    info = {"V": graph.n_pdfs, "states": graph.n_states, "words": len(graph.words),
            "arcs": int(graph.indices.shape[0])}
    if args.format == "json":
        print(json.dumps(info))
    else:
        print(f"V={info['V']} states={info['states']} words={info['words']} arcs={info['arcs']}")
    return 0


_GEN_FIELDS = {f.name for f in fields(GenConfig)}


def cmd_generate(args) -> int:
    graph = read_graph(args.graph)
    settings = {k: v for k, v in args.file_config.items() if k in _GEN_FIELDS}
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigurationError(f"--set expects key=value, got {item!r}")
        settings[key.strip().replace("-", "_")] = value.strip()
    if args.seed is not None:
        settings["seed"] = str(args.seed)
    if args.n_utts is not None:
        settings["n_utts"] = str(args.n_utts)
    config = GenConfig.from_mapping(settings)
    stats = generate_corpus(graph, config, args.out, threads=args.threads)
    if args.format == "json":
        print(json.dumps(stats.to_dict()))
    else:
        print(f"n_utts={stats.n_utts} total_frames={stats.total_frames} "
              f"same_gender={stats.n_same_gender} "
              f"opposite_gender={stats.n_utts - stats.n_same_gender} "
              f"mean_digits={stats.mean_words:.3f}")
    return 0


def _posterior_inputs(path) -> list[tuple[str, Path]]:
    p = Path(path)
    if p.is_dir():
        files = sorted(p.glob("*.fdp"))
        if not files:
            raise FileNotFoundError(f"no .fdp files in {p}")
    elif p.exists():
        files = [p]
    else:
        raise FileNotFoundError(f"posterior input not found: {p}")
    return [(f.stem, f) for f in files]


def _lbp_config(args) -> LbpConfig:
    schedule = tuple(s.strip() for s in args.schedule.split(","))
    return LbpConfig(max_sweeps=args.max_sweeps, convergence_tol=args.tol,
                     damping=args.damping, schedule=schedule)


def cmd_decode(args) -> int:
    graph = read_graph(args.graph)
    lbp_config = _lbp_config(args)
    inputs = _posterior_inputs(args.posteriors)

    def work(item):
        utt, path = item
        post = read_posterior_file(path)
        words, _, diag = decode(graph, post, args.mode, lbp_config, args.beam)
        return utt, words, diag

    if args.threads > 1:
        with ThreadPoolExecutor(args.threads) as pool:
            results = list(pool.map(work, inputs))
    else:
        results = [work(item) for item in inputs]

    write_transcripts(args.out, {utt: dict(enumerate(words)) for utt, words, _ in results})
    n_conv = None
    if args.mode == "joint-lbp":
        diag_path = args.diagnostics or f"{args.out}.diag.jsonl"
        with open(diag_path, "w", encoding="utf-8", newline="\n") as f:
            for utt, _, diag in results:
                f.write(json.dumps({"utt_id": utt, **diag.to_dict()}) + "\n")
        n_conv = sum(d.converged for _, _, d in results)
    summary = {"mode": args.mode, "n_utts": len(results), "hypotheses": str(args.out)}
    if n_conv is not None:
        summary["lbp_converged"] = n_conv
    if args.format == "json":
        print(json.dumps(summary))
    else:
        line = f"decoded {len(results)} utterance(s) with mode {args.mode} -> {args.out}"
        if n_conv is not None:
            line += f" (LBP converged on {n_conv}/{len(results)})"
        print(line)
    return 0


def cmd_score(args) -> int:
    refs = read_transcripts(args.ref)
    hyps = read_transcripts(args.hyp)
    missing = sorted(set(refs) ^ set(hyps))
    if missing:
        shown = ", ".join(missing[:10])
        more = f" (and {len(missing) - 10} more)" if len(missing) > 10 else ""
        raise ValidationError(f"{len(missing)} unmatched utt_id(s) between reference and "
                              f"hypothesis: {shown}{more}")
    for utt in refs:
        if sorted(refs[utt]) != sorted(hyps[utt]):
            raise ValidationError(f"{utt}: speaker indices differ between reference and "
                                  f"hypothesis")
    utts = sorted(refs)
    rows = [("all", utts)]
    if args.by_gender:
        manifest = read_manifest(args.by_gender)
        absent = [u for u in utts if u not in manifest]
        if absent:
            raise ValidationError(f"utt_ids missing from manifest: {', '.join(absent[:10])}")
        same = [u for u in utts if manifest[u]["genders"][0] == manifest[u]["genders"][1]]
        opposite = [u for u in utts if manifest[u]["genders"][0] != manifest[u]["genders"][1]]
        rows += [("same", same), ("opposite", opposite)]
    reports = {}
    for label, subset in rows:
        if subset:
            reports[label] = corpus_score(
                (as_streams(refs[u]), as_streams(hyps[u])) for u in subset)
    if args.format == "json":
        print(json.dumps({label: r.to_dict() for label, r in reports.items()}))
    else:
        for label, r in reports.items():
            print(r.format(f"WER[{label}]"))
    return 0


# -- argument parsing --------------------------------------------------------

def _add_common(p):
    p.add_argument("--config", help="key = value file supplying option defaults")
    p.add_argument("--format", choices=("text", "json"), default="text",
                   help="report format on stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="fhmm-decode",
        description="Two-speaker factorial HMM decoding toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-graph", help="compile lexicon + grammar into a graph file")
    p.add_argument("--lexicon", help="lexicon file (default: bundled digit lexicon)")
    p.add_argument("--phones", help="phone inventory file (default: bundled)")
    p.add_argument("--grammar", help="unigram grammar file (default: bundled)")
    p.add_argument("--silence-prob", type=float, default=0.5,
                   help="probability of optional silence after a word")
    p.add_argument("--out", required=True, help="output FDG1 graph file")
    _add_common(p)
    p.set_defaults(func=cmd_build_graph)

    p = sub.add_parser("generate", help="write a synthetic mixture corpus")
    p.add_argument("--graph", required=True)
    p.add_argument("--out", required=True, help="output corpus directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--n-utts", type=int)
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override one generator setting (repeatable)")
    p.add_argument("--threads", type=int, default=1)
    _add_common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("decode", help="decode posterior files into word hypotheses")
    p.add_argument("--graph", required=True)
    p.add_argument("--posteriors", required=True,
                   help="an .fdp file or a directory of <utt_id>.fdp files")
    p.add_argument("--mode", required=True, choices=MODES)
    p.add_argument("--out", required=True, help="hypothesis file")
    p.add_argument("--diagnostics", help="joint-lbp diagnostics JSONL (default: <out>.diag.jsonl)")
    p.add_argument("--max-sweeps", type=int, default=LbpConfig.max_sweeps)
    p.add_argument("--tol", "--convergence-tol", type=float, default=LbpConfig.convergence_tol,
                   help="LBP convergence threshold on message change")
    p.add_argument("--damping", type=float, default=LbpConfig.damping)
    p.add_argument("--schedule", default="a,b", help="LBP speaker order, e.g. 'b,a'")
    p.add_argument("--beam", type=float, default=None,
                   help="log-domain beam for the single-speaker Viterbi modes")
    p.add_argument("--threads", type=int, default=1)
    _add_common(p)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("score", help="oracle-permutation WER of hypotheses vs references")
    p.add_argument("--ref", required=True)
    p.add_argument("--hyp", required=True)
    p.add_argument("--by-gender", metavar="MANIFEST",
                   help="add same/opposite-gender rows using a corpus manifest")
    _add_common(p)
    p.set_defaults(func=cmd_score)
    return parser


def _expand_config(parser, argv):
    """Splice ``--config`` entries in as flags right after the subcommand.

    Later flags override earlier ones in argparse, so anything given on the
    command line wins over the file.  Returns ``(argv, generator_settings)``.
    """
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return argv, {}
    values = read_config_file(known.config)
    choices = parser._subparsers._group_actions[0].choices
    pos = next((i for i, tok in enumerate(argv) if tok in choices), None)
    if pos is None:
        return argv, {}
    command = argv[pos]
    flags = {}
    for action in choices[command]._actions:
        for opt in action.option_strings:
            if opt.startswith("--") and action.dest not in ("config", "help"):
                flags[opt[2:].replace("-", "_")] = opt
    extra, gen = [], {}
    for key, value in values.items():
        if key in flags:
            extra += [flags[key], value]
        elif command == "generate" and key in _GEN_FIELDS:
            gen[key] = value
        else:
            raise ConfigurationError(f"{known.config}: unknown setting {key!r} for {command}")
    return argv[:pos + 1] + extra + argv[pos + 1:], gen


class _Parser(argparse.ArgumentParser):
    """Usage errors are configuration errors (exit 1), not argparse's exit 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigurationError(message)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        argv = list(sys.argv[1:] if argv is None else argv)
        argv, gen_settings = _expand_config(parser, argv)
        args = parser.parse_args(argv)
        args.file_config = gen_settings
        if getattr(args, "threads", 1) < 1:
            raise ConfigurationError("--threads must be at least 1")
        return args.func(args)
    except DecodeToolkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
