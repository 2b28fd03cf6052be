"""Word error rate with oracle speaker permutation."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from itertools import permutations

from .errors import ConfigurationError, FormatError, ValidationError

MAX_SPEAKERS = 8


@dataclass
class WerReport:
    substitutions: int = 0
    deletions: int = 0
    insertions: int = 0
    n_reference_words: int = 0
    permutation: tuple[int, ...] | None = None

    @property
    def errors(self) -> int:
        return self.substitutions + self.deletions + self.insertions

    @property
    def wer(self) -> float:
        if self.n_reference_words == 0:
            raise ValidationError("WER is undefined for an empty reference")
        return self.errors / self.n_reference_words

    def __iadd__(self, other):
        self.substitutions += other.substitutions
        self.deletions += other.deletions
        self.insertions += other.insertions
        self.n_reference_words += other.n_reference_words
        return self

    def to_dict(self):
        out = {"substitutions": self.substitutions, "deletions": self.deletions,
               "insertions": self.insertions, "n_reference_words": self.n_reference_words,
               "wer": self.wer if self.n_reference_words else None}
        if self.permutation is not None:
            out["permutation"] = list(self.permutation)
        return out

    def format(self, label="WER"):
        return (f"{label} {100 * self.wer:.2f}% [ {self.errors} / {self.n_reference_words}, "
                f"{self.insertions} ins, {self.deletions} del, {self.substitutions} sub ]")


def edit_distance_alignment(ref, hyp) -> tuple[int, int, int]:
    """Minimal-cost alignment counts ``(S, D, I)``.

    Among alignments of equal total cost, substitutions are preferred over
    an insertion/deletion pair.
    """
    n, m = len(ref), len(hyp)
    # cells hold (total, S, D, I); the diagonal move wins cost ties
    prev = [(j, 0, 0, j) for j in range(m + 1)]
    for i in range(1, n + 1):
        cur = [(i, 0, i, 0)]
        for j in range(1, m + 1):
            t, s, d, ins = prev[j - 1]
            if ref[i - 1] == hyp[j - 1]:
                best = (t, s, d, ins)
            else:
                best = (t + 1, s + 1, d, ins)
            t, s, d, ins = prev[j]
            cand = (t + 1, s, d + 1, ins)
            if cand[0] < best[0]:
                best = cand
            t, s, d, ins = cur[j - 1]
            cand = (t + 1, s, d, ins + 1)
            if cand[0] < best[0]:
                best = cand
            cur.append(best)
        prev = cur
    _, s, d, ins = prev[m]
    return s, d, ins


def oracle_permutation_wer(refs, hyps) -> WerReport:
    """Score K hypothesis streams against K references under the best assignment.

    ``report.permutation[k]`` is the hypothesis index paired with reference
    ``k``.  Ties go to the first permutation in lexicographic order.
    """
    if len(refs) != len(hyps):
        raise ValidationError(f"{len(refs)} references vs {len(hyps)} hypotheses")
    if len(refs) > MAX_SPEAKERS:
        raise ConfigurationError(f"oracle permutation over {len(refs)} speakers refused")
    best = None
    for perm in permutations(range(len(hyps))):
        report = WerReport(permutation=perm)
        for k, h in enumerate(perm):
            s, d, i = edit_distance_alignment(refs[k], hyps[h])
            report += WerReport(s, d, i, len(refs[k]))
        if best is None or report.errors < best.errors:
            best = report
    return best


def corpus_score(pairs) -> WerReport:
    """Pool error counts over utterances, each with its own oracle permutation."""
    pairs = list(pairs)
    if not pairs:
        raise ValidationError("empty corpus")
    total = WerReport()
    for refs, hyps in pairs:
        total += oracle_permutation_wer(refs, hyps)
    if total.n_reference_words == 0:
        raise ValidationError("WER is undefined for an empty reference corpus")
    return total


# -- transcript files -------------------------------------------------------

def read_transcripts(path) -> dict[str, dict[int, list[str]]]:
    """Parse ``utt_id<TAB>spk_index<TAB>word word ...`` lines."""
    out: dict[str, dict[int, list[str]]] = defaultdict(dict)
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            cols = line.split("\t")
            if len(cols) == 2:
                cols.append("")
            if len(cols) != 3:
                raise FormatError(f"{path}:{lineno}: expected utt_id<TAB>spk<TAB>words")
            try:
                spk = int(cols[1])
            except ValueError:
                raise FormatError(f"{path}:{lineno}: bad speaker index {cols[1]!r}") from None
            out[cols[0]][spk] = cols[2].split()
    return dict(out)


def write_transcripts(path, transcripts) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for utt in sorted(transcripts):
            for spk in sorted(transcripts[utt]):
                f.write(f"{utt}\t{spk}\t{' '.join(transcripts[utt][spk])}\n")


def as_streams(entry: dict[int, list[str]]) -> list[list[str]]:
    return [entry[k] for k in sorted(entry)]
