"""Command-line frontend.

Configures two providers, runs one decode, prints the generated text,
and optionally writes a machine-readable JSONL log whose first line is
the run manifest.  Provider URIs select the implementation by scheme:
``toy:path.json``, ``replay:store.jsonl``, or a plain ``http(s)://``
endpoint URL.

Exit status: 0 on success, 2 on argument or setup errors, 3 when a
provider fails mid-run (whatever log lines were produced are kept).
"""

from __future__ import annotations

import argparse
import codecs
import json
import os
import re
import sys
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from typing import IO, Sequence

from . import __version__
from .core import BYTE_MODE, CHAR_MODE, atoms_to_text, render_atom
from .decoder import DecoderConfig, StepOutcome, decode
from .errors import CharedError
from .providers import DEFAULT_TOP_K, ProviderDescriptor, build_provider

RUN_TIMESTAMP_ENV = "CHARED_RUN_TIMESTAMP"

# Table-style coloring: model-1 picks on magenta, model-2 picks on
# green, atoms that were the argmax of both stay plain, atoms that were
# the argmax of neither go on red.
_ANSI = {"m1": "\x1b[45m", "m2": "\x1b[42m", "neither": "\x1b[41m"}
_ANSI_RESET = "\x1b[0m"
_ANSI_RE = re.compile(r"\x1b\[[0-9;]*m")


def strip_annotations(text: str) -> str:
    """Remove the provenance color codes added by --annotate."""
    return _ANSI_RE.sub("", text)


@dataclass(frozen=True)
class RunManifest:
    """Reproducibility header serialized as the first log line."""

    version: str
    created: str
    alpha: float
    mode: str
    seed: int
    top_k: int
    max_atoms: int
    atom_mode: str
    model1: str
    model2: str
    prompt1: str
    prompt2: str
    annotate: bool

    def to_json_line(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def _read_arg_text(value: str) -> str:
    """Support @file indirection for prompt and template flags."""
    if value.startswith("@"):
        with open(value[1:], "r", encoding="utf-8") as fh:
            return fh.read()
    return value


def _apply_template(prompt: str, template_arg: str | None) -> str:
    if template_arg is None:
        return prompt
    template = _read_arg_text(template_arg if template_arg.startswith("@") else "@" + template_arg)
    if "{prompt}" not in template:
        raise ValueError("template file must contain a {prompt} placeholder")
    return template.replace("{prompt}", prompt)


def _descriptor(uri: str, prompt: str, top_k: int, atom_mode: str) -> ProviderDescriptor:
    if uri.startswith("toy:"):
        return ProviderDescriptor("toy", uri[4:], prompt, top_k, atom_mode)
    if uri.startswith("replay:"):
        return ProviderDescriptor("replay", uri[7:], prompt, top_k, atom_mode)
    if uri.startswith("http://") or uri.startswith("https://"):
        return ProviderDescriptor("remote", uri, prompt, top_k, atom_mode)
    raise ValueError(f"provider URI {uri!r} must start with toy:, replay:, http:// or https://")


def _step_record(outcome: StepOutcome) -> str:
    return json.dumps(
        {
            "t": outcome.t,
            "atom": render_atom(outcome.atom),
            "provenance": outcome.provenance,
            "p1": outcome.p1,
            "p2": outcome.p2,
            "j": outcome.j,
            "refresh1": outcome.refreshed[0],
            "refresh2": outcome.refreshed[1],
            "forced1": outcome.forced_refresh[0],
            "forced2": outcome.forced_refresh[1],
        },
        sort_keys=True,
        separators=(",", ":"),
        ensure_ascii=False,
    )


def _char_spans(atoms: Sequence[str], atom_mode: str) -> list[tuple[str, int]]:
    """Group emitted atoms into displayable characters.

    Returns (character text, index of its first atom).  In byte mode a
    character may span several atoms; its provenance is taken from the
    first one.
    """
    if atom_mode == CHAR_MODE:
        return [(a, i) for i, a in enumerate(atoms)]
    decoder = codecs.getincrementaldecoder("utf-8")("replace")
    spans: list[tuple[str, int]] = []
    start = 0
    for i, atom in enumerate(atoms):
        out = decoder.decode(atom.encode("latin-1"))
        if out:
            spans.append((out, start))
            start = i + 1
    tail = decoder.decode(b"", True)
    if tail:
        spans.append((tail, start))
    return spans


def annotate_text(atoms: Sequence[str], outcomes: Sequence[StepOutcome], atom_mode: str) -> str:
    parts = []
    for char, first_atom in _char_spans(atoms, atom_mode):
        code = _ANSI.get(outcomes[first_atom].provenance)
        parts.append(f"{code}{char}{_ANSI_RESET}" if code else char)
    return "".join(parts)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chared",
        description="Decode with a character-wise ensemble of two token-level models.",
    )
    parser.add_argument("--alpha", type=float, required=True, help="weight of model 1 in [0, 1]")
    parser.add_argument("--mode", choices=("greedy", "sample"), default="greedy")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--top-k", type=int, default=DEFAULT_TOP_K, dest="top_k")
    parser.add_argument("--max-atoms", type=int, default=2048, dest="max_atoms")
    parser.add_argument("--model1", required=True, help="provider URI (toy:/replay:/http…)")
    parser.add_argument("--model2", required=True, help="provider URI (toy:/replay:/http…)")
    parser.add_argument("--prompt1", default="", help="prompt text for model 1, or @file")
    parser.add_argument("--prompt2", default="", help="prompt text for model 2, or @file")
    parser.add_argument("--template1", default=None, help="@file with a {prompt} placeholder")
    parser.add_argument("--template2", default=None, help="@file with a {prompt} placeholder")
    parser.add_argument(
        "--annotate",
        action="store_true",
        help=(
            "color each character by which model's marginal it maximized "
            "(magenta: model 1 only, green: model 2 only, plain: an exact "
            "argmax of both, red: neither)"
        ),
    )
    parser.add_argument("--atom", choices=(CHAR_MODE, BYTE_MODE), default=CHAR_MODE)
    parser.add_argument("--log", default=None, help="write one JSONL record per step")
    return parser


def run_decode(args: argparse.Namespace, stdout: IO[str]) -> int:
    prompt1 = _apply_template(_read_arg_text(args.prompt1), args.template1)
    prompt2 = _apply_template(_read_arg_text(args.prompt2), args.template2)
    descriptors = (
        _descriptor(args.model1, prompt1, args.top_k, args.atom),
        _descriptor(args.model2, prompt2, args.top_k, args.atom),
    )
    config = DecoderConfig(
        alpha=args.alpha,
        mode=args.mode,
        seed=args.seed,
        max_atoms=args.max_atoms,
        providers=descriptors,
        atom_mode=args.atom,
    )
    providers = (build_provider(descriptors[0]), build_provider(descriptors[1]))

    manifest = RunManifest(
        version=__version__,
        created=os.environ.get(
            RUN_TIMESTAMP_ENV, datetime.now(timezone.utc).isoformat(timespec="seconds")
        ),
        alpha=args.alpha,
        mode=args.mode,
        seed=args.seed,
        top_k=args.top_k,
        max_atoms=args.max_atoms,
        atom_mode=args.atom,
        model1=args.model1,
        model2=args.model2,
        prompt1=prompt1,
        prompt2=prompt2,
        annotate=args.annotate,
    )

    log_file = open(args.log, "w", encoding="utf-8", newline="\n") if args.log else None
    atoms: list[str] = []
    outcomes: list[StepOutcome] = []

    def on_step(outcome: StepOutcome) -> None:
        atoms.append(outcome.atom)
        outcomes.append(outcome)
        if log_file is not None:
            log_file.write(_step_record(outcome) + "\n")

    status = 0
    try:
        if log_file is not None:
            log_file.write(manifest.to_json_line() + "\n")
        record = decode(config, providers=providers, on_step=on_step)
        if record.termination == "provider_error":
            status = 3
    except CharedError:
        status = 3
    finally:
        if log_file is not None:
            log_file.close()

    emitted = [a for a in atoms if a not in config.stop_atoms]
    emitted_outcomes = [o for a, o in zip(atoms, outcomes) if a not in config.stop_atoms]
    if args.annotate:
        stdout.write(annotate_text(emitted, emitted_outcomes, args.atom) + "\n")
    else:
        stdout.write(atoms_to_text("".join(emitted), args.atom) + "\n")
    return status


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return run_decode(args, sys.stdout)
    except (ValueError, OSError, CharedError) as exc:
        print(f"chared: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
