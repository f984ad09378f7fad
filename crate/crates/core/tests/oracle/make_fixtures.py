"""Regenerates the authored fixtures under fixtures/.

Deterministic: a fixed seed and no wall-clock input. Run from the repo root:
    python3 crates/core/tests/oracle/make_fixtures.py
"""

import hashlib
import json
import random
from datetime import datetime, timedelta, timezone
from pathlib import Path

ROOT = Path(__file__).resolve().parents[4]
FIX = ROOT / "fixtures"
ORIGIN = datetime(2020, 1, 1, tzinfo=timezone.utc)
SALT = "facter"


def ts(dt):
    return dt.strftime("%Y-%m-%dT%H:%M:%SZ")


def week(w, day=0, hour=12, minute=0):
    return ORIGIN + timedelta(days=7 * w + day, hours=hour, minutes=minute)


def author_hash(author_id):
    return hashlib.sha256(SALT.encode() + b"\x1f" + author_id.encode()).hexdigest()


def raw(tid, text, when, author, reply=False, lang="es"):
    d = {"id": tid, "text": text, "created_at": ts(when), "author_id": author, "lang": lang}
    if reply:
        d["in_reply_to_user_id"] = "u0"
    return d


def dump_json(path, obj):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")


def dump_jsonl(path, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for r in rows:
            f.write(json.dumps(r, ensure_ascii=False, separators=(",", ":")) + "\n")


SUPPORT_31 = [
    "la mascarilla causa hipoxia",
    "Atención: la mascarilla causa hipoxia",
    "Ojo, la mascarilla causa hipoxia",
    "La mascarilla causa hipoxia!!",
    "Compartid: la mascarilla causa hipoxia",
]
COUNTER_31 = [
    "Es falso que la mascarilla causa hipoxia",
    "La mascarilla no causa hipoxia",
    "Bulo: la mascarilla causa hipoxia",
]
NOISE = [
    "Mañana empieza la liga de fútbol",
    "Receta fácil de tortilla de patatas",
    "Qué calor hace hoy en Sevilla",
    "Nuevo disco de mi grupo favorito",
]


def osn_fixtures():
    """Hoax 31: 37 unique posts over 3 pages (2 ids repeat across pages)."""
    posts = []
    # 25 supporting, peaking in weeks 23-25 (June 2020).
    weeks = [20, 21, 22, 23, 23, 24, 24, 24, 24, 24, 24, 25, 25, 25, 25, 26, 26, 27, 28, 30, 32, 35, 40, 45, 50]
    for i, w in enumerate(weeks):
        posts.append(raw(f"31{i:04d}", SUPPORT_31[i % len(SUPPORT_31)], week(w, i % 7, 9 + i % 10), f"a{i}", reply=i % 6 == 0))
    # 8 contradicting, weeks 26-33.
    for i in range(8):
        posts.append(raw(f"31{100 + i:04d}", COUNTER_31[i % len(COUNTER_31)], week(26 + i, 2), f"b{i}"))
    # 4 unrelated.
    for i, text in enumerate(NOISE):
        posts.append(raw(f"31{200 + i:04d}", text, week(24, i), f"c{i}"))
    assert len(posts) == 37
    order = sorted(posts, key=lambda p: p["created_at"], reverse=True)
    pages = [order[:15], order[15:29], order[29:]]
    # Repeat two posts of page 1 on later pages.
    pages[1].append(order[0])
    pages[2].insert(0, order[3])
    fixture = {
        "request_matcher": {"query": "(mascarilla OR tapabocas) AND hipoxia"},
        "pages": [{"data": p, "meta": {"result_count": len(p)}} for p in pages],
    }
    dump_json(FIX / "osn" / "hoax31.json", fixture)

    # Hoax 28: support peaks week 10 (5 posts), weeks 9 and 11 have 2 each.
    posts = []
    for i, w in enumerate([9, 9, 10, 10, 10, 10, 10, 11, 11]):
        posts.append(raw(f"28{i:04d}", "Las gargaras con agua y sal previenen o curan el coronavirus", week(w, i % 7), f"d{i}"))
    dump_json(FIX / "osn" / "hoax28.json", {
        "request_matcher": {"query": "gargaras AND sal AND coronavirus"},
        "pages": [{"data": posts[:5], "meta": {}}, {"data": posts[5:], "meta": {}}],
    })

    # Hoax 50: 6 supporting posts in one page, two of them replies.
    posts = [
        raw(f"50{i:04d}", "Christine Lagarde dijo que los ancianos viven demasiado", week(30 + i // 2, i), f"e{i}", reply=i < 2)
        for i in range(6)
    ]
    dump_json(FIX / "osn" / "hoax50.json", {
        "request_matcher": {"query": "\"Christine Lagarde\" AND ancianos"},
        "pages": [{"data": posts, "meta": {}}],
    })

    dump_jsonl(FIX / "query_overrides.jsonl", [
        {"hoax_id": 28, "query": "gargaras AND sal AND coronavirus"},
        {"hoax_id": 31, "query": "(mascarilla OR tapabocas) AND hipoxia"},
        {"hoax_id": 50, "query": "\"Christine Lagarde\" AND ancianos"},
    ])

    # Fact-checker counter posts: hoax 28 peaks week 12 (lag 2 after support);
    # hoax 50 outnumbers its support.
    counter = []
    for i, w in enumerate([11, 12, 12, 12, 12, 13, 13, 14, 20, 25, 30]):
        counter.append({
            "id": f"f28{i:03d}", "text": "Es falso que las gargaras con agua y sal previenen o curan el coronavirus",
            "created_at": ts(week(w, 1)), "author_hash": author_hash("maldita"), "lang": "es", "is_reply": False,
        })
    for i in range(9):
        counter.append({
            "id": f"f50{i:03d}", "text": "Bulo: Christine Lagarde dijo que los ancianos viven demasiado",
            "created_at": ts(week(31 + i % 3, 3)), "author_hash": author_hash("newtral"), "lang": "es", "is_reply": False,
        })
    dump_jsonl(FIX / "factchecker_tweets.jsonl", counter)


UNRELATED = [
    "Hoy juega el equipo de baloncesto", "Me encanta el café por la mañana", "El tren llega tarde otra vez",
    "Buenas noches a todos", "Qué bonito atardecer en la playa", "Estoy leyendo una novela policiaca",
    "Mi perro se llama Toby", "Feliz cumpleaños hermana", "La película de anoche fue aburrida",
    "Nuevo récord de temperatura en agosto", "Good morning everyone", "Just finished my workout",
    "The concert was amazing tonight", "Traffic is terrible today", "I love pizza with pineapple",
]
PREFIXES = ["", "Atención:", "Ojo,", "Urgente:", "Lo dicen los médicos:", "Compartid:", "RT"]
NEGATORS = ["Es falso que", "Bulo:", "Mentira:", "No es cierto que"]


def synthetic_corpus():
    rng = random.Random(20200101)
    hoaxes = [json.loads(l) for l in open(FIX / "hoaxes.jsonl", encoding="utf-8")]
    rows = []
    start = ORIGIN + timedelta(days=31)
    for i in range(1000):
        r = rng.random()
        h = rng.choice(hoaxes)
        if r < 0.30:
            text = f"{rng.choice(PREFIXES)} {h['text']}".strip()
        elif r < 0.42:
            text = f"{rng.choice(NEGATORS)} {h['text'][0].lower()}{h['text'][1:]}"
        elif r < 0.52:
            words = h["text"].split()
            keep = [w for w in words if rng.random() > 0.35] or words[:1]
            text = " ".join(keep)
        elif r < 0.60:
            text = h["alt_texts"][0]
        else:
            text = f"{rng.choice(UNRELATED)}. {rng.choice(UNRELATED)}"
        when = start + timedelta(seconds=rng.randrange(0, 500 * 86400))
        author = f"user{rng.randrange(300)}"
        rows.append({
            "id": str(1240000000000000000 + i * 7919),
            "text": text,
            "created_at": ts(when),
            "author_hash": author_hash(author),
            "lang": "en" if r >= 0.52 and r < 0.60 else "es",
            "is_reply": rng.random() < 0.2,
        })
    dump_jsonl(FIX / "corpus_1000.jsonl", rows)
    digest = hashlib.sha256((FIX / "corpus_1000.jsonl").read_bytes()).hexdigest()
    print("corpus_1000.jsonl sha256", digest)


def sick_layout_predictions():
    """Confusion matrix (rows gold, cols pred; order C, E, N) whose
    per-label and summary metrics equal the published English SICK rows."""
    labels = ["CONTRADICTION", "ENTAILMENT", "NEUTRAL"]
    matrix = [[533, 1, 178], [1, 1256, 147], [48, 225, 2517]]
    rows = []
    n = 0
    for g, counts in enumerate(matrix):
        for p, c in enumerate(counts):
            for _ in range(c):
                rows.append({"id": f"sick{n:05d}", "gold": labels[g], "pred": labels[p]})
                n += 1
    random.Random(4906).shuffle(rows)
    dump_jsonl(FIX / "eval" / "sick_en_predictions.jsonl", rows)


def sts_fixture():
    """Three language pairs with Pearson r of 0.8, 0.6 and 0.7 by
    construction: gold is an affine image of r*e1 + sqrt(1-r^2)*e2 for
    orthonormal centered e1, e2, and the model score is e1."""
    rng = random.Random(15)
    n = 40
    rows = []
    for lang, r in [("EN-EN", 0.8), ("EN-ES", 0.6), ("ES-ES", 0.7)]:
        a = [rng.gauss(0, 1) for _ in range(n)]
        b = [rng.gauss(0, 1) for _ in range(n)]
        ma, mb = sum(a) / n, sum(b) / n
        a = [x - ma for x in a]
        b = [x - mb for x in b]
        na = sum(x * x for x in a) ** 0.5
        e1 = [x / na for x in a]
        proj = sum(x * y for x, y in zip(b, e1))
        b = [x - proj * y for x, y in zip(b, e1)]
        nb = sum(x * x for x in b) ** 0.5
        e2 = [x / nb for x in b]
        y = [r * u + (1 - r * r) ** 0.5 * v for u, v in zip(e1, e2)]
        lo, hi = min(y), max(y)
        for i in range(n):
            gold = 5 * (y[i] - lo) / (hi - lo)
            rows.append((f"{lang.lower()}-{i:03d}", lang, repr(e1[i]), repr(gold)))
    with open(FIX / "eval" / "sts_3lang.csv", "w", encoding="utf-8") as f:
        f.write("pair_id,lang_pair,model_score,gold_score\n")
        for row in rows:
            f.write(",".join(row) + "\n")


if __name__ == "__main__":
    osn_fixtures()
    synthetic_corpus()
    sick_layout_predictions()
    sts_fixture()
