"""Writes corpus.jsonl: 54 short template news articles over three topics
plus a few off-topic ones. Seeded, so the output is stable."""

import json
import random
from pathlib import Path

rng = random.Random(2019)

PEOPLE = ["Kim Jong Un", "Moon Jae In", "Donald Trump", "Mike Pence", "Nancy Pelosi",
          "Chuck Schumer", "James Comey", "Robert Mueller", "Mark Zuckerberg", "Julian Assange"]
OFFICIALS = ["a senior official", "a spokesman", "one analyst", "a former diplomat",
             "a government adviser", "an aide", "a lawmaker", "a retired general"]
VERBS = ["said", "told reporters", "warned", "argued", "insisted", "claimed", "noted"]
DAYS = ["on Monday", "on Tuesday", "on Wednesday", "on Thursday", "on Friday", "last week", "this weekend"]

KOREA = {
    "subjects": ["North Korea", "Pyongyang", "the Korean regime", "South Korea", "Seoul"],
    "nouns": ["missile test", "nuclear program", "border talks", "summit", "sanctions package",
              "military parade", "rocket launch", "peace proposal"],
    "places": ["near the border", "in Pyongyang", "at the demilitarized zone", "in Seoul", "off the coast"],
    "facts": [
        "Pyongyang has rejected every offer of talks so far this year.",
        "The Korean peninsula has remained divided since the war ended in an armistice.",
        "Analysts in Seoul said the launch was meant to send a message to Washington.",
        "The regime in Pyongyang described the drills as a rehearsal for invasion.",
        "Korea watchers expect another test before the end of the month.",
    ],
    "keyword": "korea",
}
POLITICS = {
    "subjects": ["the White House", "Congress", "the Senate", "Trump", "the administration", "Washington"],
    "nouns": ["budget bill", "tax plan", "border wall", "health care vote", "trade deal",
              "executive order", "campaign rally", "immigration policy"],
    "places": ["in Washington", "in Florida", "in California", "at the Capitol", "near the Mexico border"],
    "facts": [
        "Trump told supporters in Florida that the wall would be built.",
        "The Senate vote in Washington is expected to be close.",
        "Democrats in California promised to challenge the order in court.",
        "The American economy added jobs for the fifth month in a row.",
        "Trump said the deal with Mexico would be signed within weeks.",
    ],
    "keyword": "trump",
}
MEDIA = {
    "subjects": ["the newspaper", "the network", "the reporter", "Facebook", "the FBI", "journalists"],
    "nouns": ["fake news report", "leaked memo", "surveillance program", "false story",
              "whistleblower complaint", "retraction", "fact check", "intelligence briefing"],
    "places": ["on social media", "in a newsroom", "on Instagram", "in a statement", "on television"],
    "facts": [
        "The reporter said the fake story had been shared millions of times.",
        "Journalists questioned whether the allegations were true or false.",
        "The FBI declined to comment on the surveillance allegations.",
        "A whistleblower said the intelligence was wrong from the start.",
        "The fake report was removed after a journalist flagged it.",
    ],
    "keyword": "fake",
}
OTHER = {
    "subjects": ["the city council", "the football club", "the weather service", "the museum", "local farmers"],
    "nouns": ["harvest festival", "stadium plan", "storm warning", "art exhibition", "bus route"],
    "places": ["downtown", "in the valley", "along the river", "at the fairground"],
    "facts": [
        "Heavy rain is expected across the region through the weekend.",
        "The exhibition will remain open until the end of the summer.",
        "The club has not won a trophy in eleven years.",
    ],
    "keyword": None,
}


def sentence(topic):
    s = rng.choice(topic["subjects"])
    n = rng.choice(topic["nouns"])
    p = rng.choice(topic["places"])
    o = rng.choice(OFFICIALS)
    v = rng.choice(VERBS)
    d = rng.choice(DAYS)
    who = rng.choice(PEOPLE)
    forms = [
        f"{s[0].upper() + s[1:]} announced a new {n} {p} {d}, {o} {v}.",
        f"The {n} was discussed {p} {d}, according to {o}.",
        f"{who} {v} that the {n} would not change anything.",
        f"{o[0].upper() + o[1:]} {v} the {n} {p} was a mistake.",
        f"Critics of {s} said the {n} came too late.",
        f"{who} met officials {p} {d} to discuss the {n}.",
    ]
    return rng.choice(forms)


def article(i, topic, topic_name):
    paras = []
    for _ in range(rng.randint(3, 4)):
        sents = [sentence(topic) for _ in range(rng.randint(2, 4))]
        sents.insert(rng.randrange(len(sents) + 1), rng.choice(topic["facts"]))
        paras.append(" ".join(sents))
    noun = rng.choice(topic["nouns"])
    title = f"{rng.choice(topic['subjects']).title()} and the {noun}"
    return {
        "id": f"{topic_name}-{i:02d}",
        "title": title,
        "body": "\n\n".join(paras),
        "source": "toy",
    }


def main():
    out = []
    for name, topic, count in [("korea", KOREA, 17), ("politics", POLITICS, 17), ("media", MEDIA, 16), ("other", OTHER, 4)]:
        for i in range(count):
            out.append(article(i, topic, name))
    path = Path(__file__).with_name("corpus.jsonl")
    path.write_text("".join(json.dumps(a, ensure_ascii=False) + "\n" for a in out))


if __name__ == "__main__":
    main()
