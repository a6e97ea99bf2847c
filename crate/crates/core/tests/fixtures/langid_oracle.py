"""Independent check of langid_tokens.tsv against the default cascade.

Written from the rule description only; shares no code with the Rust crate.

    python3 langid_oracle.py langid_tokens.tsv
"""

import sys


def strip(tok):
    while tok and tok[0] in "▁ĠĊ":
        tok = tok[1:]
    return tok


def label(tok):
    s = strip(tok)
    low = s.lower()
    if any(0x4E00 <= ord(c) <= 0x9FFF or 0x3400 <= ord(c) <= 0x4DBF for c in low):
        return "ZH"
    if any(c in "ñ¿¡áéíóúü" for c in low) and not any(c in "ßäö" for c in low):
        return "ES"
    if any(c in "ßäö" for c in low):
        return "DE"
    if any(c in "çœàèêâîôûëï" for c in low):
        return "FR"
    letters = [c for c in low if c.isalpha()]
    if len(s) >= 2 and letters and all("a" <= c <= "z" for c in letters):
        return "EN"
    return "Unknown"


def main(path):
    bad = 0
    n = 0
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.rstrip("\n")
            if line.startswith("# "):
                continue
            tok, want = line.split("\t")
            n += 1
            got = label(tok)
            if got != want:
                bad += 1
                print(f"{tok!r}: hand {want}, oracle {got}")
    print(f"{n} tokens, {bad} disagreements")
    return 1 if bad else 0


if __name__ == "__main__":
    sys.exit(main(sys.argv[1]))
