"""Generates the bundled template corpus in crates/core/data/corpus.txt.

Deterministic: rerunning reproduces the committed file byte for byte.
"""

import random
from pathlib import Path

DET = "the a this that every some my our their his her one".split()
ADJ = ("small old red quiet bright cold green dark heavy young tall warm "
       "new busy empty simple strange gentle loud narrow broken clean dusty "
       "golden hidden lazy lonely proud rough silver soft sudden wild wooden "
       "yellow careful clever honest patient polite").split()
NOUN = ("cat dog bird horse farmer teacher doctor child river garden window "
        "table letter story road bridge village market city forest mountain "
        "train boat ship song book lamp door house kitchen friend neighbor "
        "student captain baker painter sailor soldier king queen fox wolf bear "
        "owl rabbit tree flower stone field lake storm wind morning evening "
        "winter summer picture coat basket bottle chair clock key map box "
        "ladder bell candle rope wagon tower castle island valley desk pencil "
        "engine hammer blanket mirror kettle").split()
VERB = ("saw found carried painted watched followed opened closed built "
        "cleaned fixed visited crossed remembered dropped lifted pushed pulled "
        "wrote read sold bought borrowed chased greeted helped noticed "
        "answered counted measured washed hid lost kept moved packed shared "
        "touched turned wanted warned".split())
IVERB = "slept waited laughed arrived smiled rested listened wandered shouted stayed".split()
ADV = "quickly slowly quietly happily carefully suddenly early late again today yesterday often".split()
PREP = "near under behind beside across inside past toward beyond through".split()
NAME = "anna ben carla david emma frank grace henry iris jack".split()


def zipf_pick(rng, words, used):
    weights = [1.0 / (i + 1) ** 0.9 for i in range(len(words))]
    for _ in range(50):
        w = rng.choices(words, weights=weights)[0]
        if w not in used:
            used.add(w)
            return w
    return None


def noun_phrase(rng, used, adj_p=0.45):
    out = [rng.choice(DET)]
    if rng.random() < adj_p:
        out.append(zipf_pick(rng, ADJ, used))
    out.append(zipf_pick(rng, NOUN, used))
    return out


def subject(rng, used):
    if rng.random() < 0.2:
        return [zipf_pick(rng, NAME, used)]
    return noun_phrase(rng, used)


def sentence(rng):
    used = set()
    t = rng.random()
    s = subject(rng, used)
    if t < 0.55:
        s += [zipf_pick(rng, VERB, used)] + noun_phrase(rng, used)
        if rng.random() < 0.4:
            s += [zipf_pick(rng, PREP, used)] + noun_phrase(rng, used, 0.3)
    elif t < 0.8:
        s += [zipf_pick(rng, IVERB, used)]
        if rng.random() < 0.7:
            s += [zipf_pick(rng, PREP, used)] + noun_phrase(rng, used)
    else:
        s += [zipf_pick(rng, ADV, used), zipf_pick(rng, VERB, used)] + noun_phrase(rng, used)
    if rng.random() < 0.3:
        s.append(zipf_pick(rng, ADV, used))
    return [w for w in s if w]


def main():
    rng = random.Random(20240611)
    seen, lines = set(), []
    while len(lines) < 240:
        s = sentence(rng)
        if not 4 <= len(s) <= 12:
            continue
        line = " ".join(s)
        if line in seen:
            continue
        seen.add(line)
        lines.append(line)
    out = Path(__file__).resolve().parent.parent / "crates/core/data/corpus.txt"
    out.write_text("\n".join(lines) + "\n")
    words = [w for l in lines for w in l.split()]
    print(f"{len(lines)} sentences, {len(words)} tokens, {len(set(words))} unique words")
    lens = [len(l.split()) for l in lines]
    print(f"length {min(lens)}..{max(lens)}, mean {sum(lens)/len(lens):.2f}")


if __name__ == "__main__":
    main()
