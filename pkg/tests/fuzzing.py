"""Random mutations of circuit text for parser fuzzing."""
import numpy as np

ALPHABET = list("abcAB12.,=+-#_ \t\n0e") + ["modes=", "source", "bs", "detector", "pattern", "=click", "é", "\x00", "1e999", "nan"]


def mutate(text: str, rng: np.random.Generator, n_edits: int = 3) -> str:
    for _ in range(n_edits):
        kind = rng.integers(6)
        pos = int(rng.integers(len(text) + 1))
        if kind == 0 and text:
            text = text[:pos] + text[pos + 1 :]
        elif kind == 1:
            text = text[:pos] + ALPHABET[rng.integers(len(ALPHABET))] + text[pos:]
        elif kind == 2:
            lines = text.split("\n")
            k = int(rng.integers(len(lines)))
            lines.insert(int(rng.integers(len(lines) + 1)), lines[k])
            text = "\n".join(lines)
        elif kind == 3:
            lines = text.split("\n")
            del lines[int(rng.integers(len(lines)))]
            text = "\n".join(lines)
        elif kind == 4:
            tokens = text.split(" ")
            i, j = rng.integers(len(tokens), size=2)
            tokens[i], tokens[j] = tokens[j], tokens[i]
            text = " ".join(tokens)
        else:
            end = min(len(text), pos + int(rng.integers(1, 8)))
            text = text[:pos] + "".join(ALPHABET[k] for k in rng.integers(len(ALPHABET), size=2)) + text[end:]
    return text


def fuzz(texts, n: int, seed: int = 0):
    """Parse ``n`` mutated inputs; returns (accepted, rejected, crashes)."""
    from spdcsim.dsl import ParseError, parse

    rng = np.random.default_rng(seed)
    accepted = rejected = 0
    crashes = []
    for k in range(n):
        src = mutate(texts[k % len(texts)], rng, int(rng.integers(1, 6)))
        try:
            parse(src)
            accepted += 1
        except ParseError as exc:
            if not (exc.line >= 1 and exc.column >= 1):
                crashes.append((src, exc))
            rejected += 1
        except Exception as exc:  # any other exception is a crash
            crashes.append((src, exc))
    return accepted, rejected, crashes
