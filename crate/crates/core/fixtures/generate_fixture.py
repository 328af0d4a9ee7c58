"""Regenerates the bundled synthetic OLID-format fixture (train.tsv / test.tsv).

Output is deterministic; rerunning rewrites byte-identical files.
"""
import random

rng = random.Random(20190601)

OFFENSIVE = ["idiot", "idiots", "moron", "stupid", "pathetic", "trash", "loser",
             "disgusting", "clown", "scum", "dumb", "liar", "worthless", "garbage", "fool"]
PROFANE = ["damn", "hell", "crap", "f***ing", "s**t"]
NEUTRAL = ["great", "game", "today", "weather", "coffee", "music", "friends", "weekend",
           "vote", "news", "movie", "dinner", "morning", "love", "happy", "team", "season",
           "book", "city", "school", "family", "summer", "beautiful", "thanks", "congrats",
           "watching", "reading", "amazing", "support", "proud", "tonight", "debate", "policy"]
GROUPS = ["liberals", "conservatives", "democrats", "republicans", "fans", "politicians",
          "journalists", "celebrities"]
ORGS = ["the media", "this company", "the government", "the league", "that network", "the league office"]
HASHTAGS = ["#MAGA", "#StopHate", "#stop_hate", "#KavanaughConfirmation", "#WalkAway",
            "#GunControlNow", "#Election2020", "#ThursdayThoughts", "#MeToo", "#fake_news",
            "#QAnon", "#BeKind"]
EMOJI = ["🔥", "😂", "🙄", "😡", "👍", "❤️", "🤣", "💯", "🇺🇸", "👏🏽"]
URLS = ["https://t.co/Xk9Pq2", "http://bit.ly/3abc", "www.example.com/story", "URL"]


def decorate(words):
    out = list(words)
    if rng.random() < 0.6:
        out.insert(0, "@USER")
    if rng.random() < 0.3:
        out.append(rng.choice(HASHTAGS))
    if rng.random() < 0.3:
        out.append(rng.choice(EMOJI))
    if rng.random() < 0.2:
        out.append(rng.choice(URLS))
    text = " ".join(out)
    if rng.random() < 0.5:
        text += rng.choice(["!", "!!!", "?", ".", "..."])
    if rng.random() < 0.3:
        text = text[0].upper() + text[1:]
    return text


def neutral():
    words = rng.sample(NEUTRAL, rng.randint(4, 9))
    return decorate(words)


def individual():
    w = rng.sample(NEUTRAL, rng.randint(2, 5))
    insult = rng.choice(OFFENSIVE)
    lead = rng.choice(["you are a", "he is such a", "she is a", "what a", "you"])
    return decorate(w[:1] + lead.split() + [insult] + w[1:])


def group():
    w = rng.sample(NEUTRAL, rng.randint(2, 5))
    g = rng.choice(GROUPS)
    insult = rng.choice(OFFENSIVE)
    return decorate(w[:1] + ["all", g, "are", insult] + w[1:])


def other():
    w = rng.sample(NEUTRAL, rng.randint(2, 5))
    o = rng.choice(ORGS)
    insult = rng.choice(OFFENSIVE)
    return decorate(w[:1] + o.split() + ["is", insult] + w[1:])


def untargeted():
    w = rng.sample(NEUTRAL, rng.randint(2, 5))
    p = rng.choice(PROFANE)
    return decorate(w[:2] + [p, "this", rng.choice(["day", "week", "traffic", "weather"])] + w[2:])


def emit(path, counts, start_id):
    rows = []
    for kind, n in counts:
        for _ in range(n):
            if kind == "NOT":
                rows.append((neutral(), "NOT", "NULL", "NULL"))
            elif kind == "UNT":
                rows.append((untargeted(), "OFF", "UNT", "NULL"))
            elif kind == "IND":
                rows.append((individual(), "OFF", "TIN", "IND"))
            elif kind == "GRP":
                rows.append((group(), "OFF", "TIN", "GRP"))
            else:
                rows.append((other(), "OFF", "TIN", "OTH"))
    rng.shuffle(rows)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("id\ttweet\tsubtask_a\tsubtask_b\tsubtask_c\n")
        for i, (t, a, b, c) in enumerate(rows):
            f.write(f"{start_id + i}\t{t}\t{a}\t{b}\t{c}\n")


emit("train.tsv", [("NOT", 107), ("IND", 26), ("GRP", 14), ("OTH", 6), ("UNT", 7)], 90000)
emit("test.tsv", [("NOT", 29), ("IND", 5), ("GRP", 3), ("OTH", 1), ("UNT", 2)], 95000)
