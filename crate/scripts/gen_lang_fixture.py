#!/usr/bin/env python3
"""Writes the 300-sentence language identification fixture (100 zh, 100 en,
100 fr). Sentences come from small templates filled from word pools with a
fixed seed, so the file is reproducible and shares no lines with the
detector's training text."""
import json
import random
from pathlib import Path

EN_T = [
    "The {p} near the {q} opens at {h} o'clock on weekdays.",
    "Could you tell me how to get to the {p}?",
    "My {r} lost a {o} somewhere between the {p} and the {q}.",
    "Is the {p} still open after the exam period ends?",
    "We usually meet our {r} in the {p} before lunch.",
    "Students must return every {o} to the {p} by Friday.",
    "Where can I buy a new {o} on campus?",
    "The {r} said the {p} will be closed for repairs next week.",
    "How much does it cost to print a {o} at the {q}?",
    "I forgot my {o} in the {p} yesterday evening.",
]
EN = {
    "p": ["library", "canteen", "gym", "lecture hall", "student center", "clinic", "bookshop", "swimming pool"],
    "q": ["lake", "main gate", "dormitory", "teaching building", "sports field", "post office"],
    "r": ["teacher", "roommate", "supervisor", "classmate", "tutor", "advisor"],
    "o": ["student card", "umbrella", "laptop", "library book", "water bottle", "notebook"],
    "h": ["seven", "eight", "nine", "ten"],
}
FR_T = [
    "La {p} près du {q} ouvre à {h} heures en semaine.",
    "Pourriez-vous m'indiquer le chemin vers la {p} ?",
    "Mon {r} a perdu un {o} entre la {p} et le {q}.",
    "Est-ce que la {p} reste ouverte après la période des examens ?",
    "Nous retrouvons souvent notre {r} à la {p} avant le déjeuner.",
    "Les étudiants doivent rendre chaque {o} à la {p} avant vendredi.",
    "Où puis-je acheter un nouveau {o} sur le campus ?",
    "Le {r} a dit que la {p} sera fermée pour travaux la semaine prochaine.",
    "Combien coûte l'impression d'un {o} près du {q} ?",
    "J'ai oublié mon {o} dans la {p} hier soir.",
]
FR = {
    "p": ["bibliothèque", "cantine", "salle de sport", "salle de conférence", "maison des étudiants", "infirmerie", "librairie", "piscine"],
    "q": ["lac", "portail principal", "dortoir", "bâtiment d'enseignement", "terrain de sport", "bureau de poste"],
    "r": ["professeur", "colocataire", "directeur de thèse", "camarade", "tuteur", "conseiller"],
    "o": ["badge étudiant", "parapluie", "ordinateur portable", "livre emprunté", "cahier", "téléphone"],
    "h": ["sept", "huit", "neuf", "dix"],
}
ZH_T = [
    "{p}在{q}旁边，工作日{h}点开门。",
    "请问去{p}怎么走？",
    "我的{r}在{p}和{q}之间丢了{o}。",
    "考试周结束以后{p}还开放吗？",
    "我们经常在午饭前和{r}在{p}见面。",
    "所有学生都要在周五之前把{o}还给{p}。",
    "在学校里哪里可以买到新的{o}？",
    "{r}说{p}下周要关闭维修。",
    "在{q}打印一份{o}要多少钱？",
    "我昨天晚上把{o}忘在{p}了。",
]
ZH = {
    "p": ["图书馆", "食堂", "体育馆", "报告厅", "学生活动中心", "校医院", "书店", "游泳馆"],
    "q": ["湖边", "南门", "宿舍楼", "教学楼", "操场", "邮局"],
    "r": ["老师", "室友", "导师", "同学", "助教", "辅导员"],
    "o": ["校园卡", "雨伞", "笔记本电脑", "借来的书", "水杯", "作业"],
    "h": ["七", "八", "九", "十"],
}


def fill(rng, templates, pools, n):
    out = set()
    while len(out) < n:
        t = rng.choice(templates)
        out.add(t.format(**{k: rng.choice(v) for k, v in pools.items()}))
    return sorted(out)


def main():
    rng = random.Random(7)
    rows = []
    for lang, t, p in (("zh", ZH_T, ZH), ("en", EN_T, EN), ("fr", FR_T, FR)):
        for i, s in enumerate(fill(rng, t, p, 100)):
            rows.append({"id": f"{lang}-{i:03}", "lang": lang, "text": s})
    out = Path(__file__).resolve().parent.parent / "crates" / "core" / "tests" / "fixtures" / "lang_300.jsonl"
    with open(out, "w", encoding="utf-8") as f:
        for r in rows:
            f.write(json.dumps(r, ensure_ascii=False) + "\n")
    print(len(rows))


if __name__ == "__main__":
    main()
