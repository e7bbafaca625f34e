# Copyright 2026 The mfuse Authors.
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     https://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Writes the 60-record corpus fixture and its expected outcomes.

Every expected column below was worked out by hand from the rules
(min 3 words, banned terms pornword/xxxsite, text probability threshold 0.3,
annotations under 3 s dropped, binary ties -> NotHate, hate category ties
in the order Racist < Sexist < Homophobic < ReligionAttack < OtherHate).
Nothing here calls into mfuse. Run from this directory:

    python3 make_fixture.py
"""

import json

CATS = {"N": "NotHate", "R": "Racist", "S": "Sexist", "H": "Homophobic",
        "G": "ReligionAttack", "O": "OtherHate"}

IMG = "img.ppm"
NO_PROB = None

# id, tweet text, retweet, image_ref, text probability, annotations
# ("R10" = Racist in 10 s), then the expected filter, gate, labelable,
# label, category, retained votes and binary tie. Empty strings mean the
# record never reached that stage.
ROWS = [
    # filter stage
    ("f01", "this is a retweet of termy", True, IMG, 0.1, "R10 R10 R10",
     "retweet", "", "", "", "", "", ""),
    ("f02", "rt short", True, IMG, 0.1, "N10 N10 N10",
     "retweet", "", "", "", "", "", ""),
    ("f03", "another shared post here", True, None, 0.1, "N10 N10 N10",
     "retweet", "", "", "", "", "", ""),
    ("f04", "retweet with pornword inside", True, IMG, 0.1, "N10 N10 N10",
     "retweet", "", "", "", "", "", ""),
    ("f05", "two words", False, IMG, 0.1, "N10 N10 N10",
     "too_short", "", "", "", "", "", ""),
    ("f06", "hello", False, IMG, 0.1, "N10 N10 N10",
     "too_short", "", "", "", "", "", ""),
    ("f07", "", False, IMG, 0.1, "N10 N10 N10",
     "too_short", "", "", "", "", "", ""),
    ("f08", "  spaced   out  ", False, IMG, 0.1, "N10 N10 N10",
     "too_short", "", "", "", "", "", ""),
    ("f09", "this has pornword in it", False, IMG, 0.1, "N10 N10 N10",
     "banned_term", "", "", "", "", "", ""),
    ("f10", "look at XXXSITE now!", False, IMG, 0.1, "N10 N10 N10",
     "banned_term", "", "", "", "", "", ""),
    ("f11", "pornword", False, IMG, 0.1, "N10 N10 N10",
     "too_short", "", "", "", "", "", ""),
    ("f12", "nice picture of the sea", False, None, 0.1, "N10 N10 N10",
     "no_image", "", "", "", "", "", ""),
    ("f13", "termy hate without an image", False, "", 0.1, "R10 R10 R10",
     "no_image", "", "", "", "", "", ""),
    # image text gate
    ("g01", "a picture full of text", False, IMG, 0.31, "N10 N10 N10",
     "keep", "discard", "", "", "", "", ""),
    ("g02", "meme with a long caption", False, IMG, 0.9, "R10 R10 R10",
     "keep", "discard", "", "", "", "", ""),
    ("g03", "screenshot of a whole page", False, IMG, 1.0, "N10 N10 N10",
     "keep", "discard", "", "", "", "", ""),
    ("g04", "termy meme with words", False, IMG, 0.5, "R10 R10 R10",
     "keep", "discard", "", "", "", "", ""),
    ("g05", "no probability was measured", False, IMG, NO_PROB, "N10 N10 N10",
     "keep", "ungated", "", "", "", "", ""),
    ("g06", "termy probability missing here", False, IMG, NO_PROB, "R10 R10 R10",
     "keep", "ungated", "", "", "", "", ""),
    # aggregation
    ("a01", "first labeled tweet here", False, IMG, 0.0, "R10 N8 R12",
     "keep", "keep", "true", "1", "Racist", "3", "false"),
    ("a02", "second labeled tweet here", False, IMG, 0.0, "N5 N6 R9",
     "keep", "keep", "true", "0", "NotHate", "3", "false"),
    ("a03", "category tie after fast removal", False, IMG, 0.0, "R10 S10 N2",
     "keep", "keep", "true", "1", "Racist", "2", "false"),
    ("a04", "every annotator was too fast", False, IMG, 0.0, "N2 R1 S2.5",
     "keep", "keep", "false", "", "", "0", "false"),
    ("a05", "binary tie after fast removal", False, IMG, 0.0, "R10 N10 S1",
     "keep", "keep", "true", "0", "NotHate", "2", "true"),
    ("a06", "sexist majority in this one", False, IMG, 0.0, "S4 S5 N6",
     "keep", "keep", "true", "1", "Sexist", "3", "false"),
    ("a07", "three seconds is not fast", False, IMG, 0.0, "H7 H3 N20",
     "keep", "keep", "true", "1", "Homophobic", "3", "false"),
    ("a08", "religion beats other here", False, IMG, 0.0, "G9 O9 G9",
     "keep", "keep", "true", "1", "ReligionAttack", "3", "false"),
    ("a09", "other hate all around", False, IMG, 0.0, "O5 O5 O5",
     "keep", "keep", "true", "1", "OtherHate", "3", "false"),
    ("a10", "fast not hate vote dropped", False, IMG, 0.0, "N1 R4 S5",
     "keep", "keep", "true", "1", "Racist", "2", "false"),
    ("a11", "three way category tie", False, IMG, 0.0, "S5 H5 O5",
     "keep", "keep", "true", "1", "Sexist", "3", "false"),
    ("a12", "homophobic wins the tie", False, IMG, 0.0, "H5 O5 N5",
     "keep", "keep", "true", "1", "Homophobic", "3", "false"),
    ("a13", "religion wins the tie", False, IMG, 0.0, "G5 O5 N5",
     "keep", "keep", "true", "1", "ReligionAttack", "3", "false"),
    ("a14", "all three say fine", False, IMG, 0.0, "N5 N5 N5",
     "keep", "keep", "true", "0", "NotHate", "3", "false"),
    ("a15", "only one annotation here", False, IMG, 0.0, "R5",
     "keep", "keep", "true", "1", "Racist", "1", "false"),
    ("a16", "two calm annotations only", False, IMG, 0.0, "N5 N6",
     "keep", "keep", "true", "0", "NotHate", "2", "false"),
    ("a17", "four annotations one fast", False, IMG, 0.0, "R5 R6 N7 N1",
     "keep", "keep", "true", "1", "Racist", "3", "false"),
    ("a18", "sexist twice other once", False, IMG, 0.0, "O4 S3 S3.5",
     "keep", "keep", "true", "1", "Sexist", "3", "false"),
    ("a19", "i hate termy people so much", False, IMG, 0.0, "R8 R9 N10",
     "keep", "keep", "true", "1", "Racist", "3", "false"),
    ("a20", "TermY, go away now", False, IMG, 0.0, "S8 S9 S10",
     "keep", "keep", "true", "1", "Sexist", "3", "false"),
    ("a21", "those termy folks again", False, IMG, 0.0, "O8 N9 O10",
     "keep", "keep", "true", "1", "OtherHate", "3", "false"),
    ("a22", "termx are the worst", False, IMG, 0.0, "H8 H9 N3",
     "keep", "keep", "true", "1", "Homophobic", "3", "false"),
    ("a23", "we despise termx here", False, IMG, 0.0, "G8 R9 G10",
     "keep", "keep", "true", "1", "ReligionAttack", "3", "false"),
    ("a24", "my termy friend is great", False, IMG, 0.0, "N8 N9 R10",
     "keep", "keep", "true", "0", "NotHate", "3", "false"),
    ("a25", "termx is a word i study", False, IMG, 0.0, "N8 N9 N10",
     "keep", "keep", "true", "0", "NotHate", "3", "false"),
    ("a26", "termx appears in this essay", False, IMG, 0.0, "N8 S9 N10",
     "keep", "keep", "true", "0", "NotHate", "3", "false"),
    ("a27", "termyish things are fine", False, IMG, 0.0, "N8 N9 N10",
     "keep", "keep", "true", "0", "NotHate", "3", "false"),
    ("a28", "pornwords is not on the list", False, IMG, 0.0, "N8 N9 N10",
     "keep", "keep", "true", "0", "NotHate", "3", "false"),
    ("a29", "text probability right at threshold", False, IMG, 0.3, "N8 N9 N10",
     "keep", "keep", "true", "0", "NotHate", "3", "false"),
]

CALM = [
    "a calm day at the park",
    "coffee with friends this morning",
    "the sunset over the hills",
    "new shoes for the marathon",
    "my cat sleeping on the couch",
    "rainy weekend at home again",
    "fresh bread from the bakery",
    "concert tickets finally arrived today",
    "learning to play the guitar",
    "garden tomatoes are ripe now",
    "first snow of the winter",
    "reading a good book tonight",
]
for i, text in enumerate(CALM):
    ROWS.append((f"a{30 + i:02d}", text, False, IMG, 0.05, "N8 N9 N10",
                 "keep", "keep", "true", "0", "NotHate", "3", "false"))

HEADER = "id,filter,gate,labelable,label,category,retained,binary_tie"

# termx: hate a22 a23, not hate a25 a26. termy: hate a19 a20 a21 (a20 as
# "TermY,"), not hate a24; a27's "termyish" is another token and the termy
# records f01 f13 g04 g06 never become examples.
KEYWORD_RATES = """keyword,hate_count,nothate_count,fraction
termx,2,2,0.500000
termy,3,1,0.750000
absentword,0,0,null
"""

# 40 labelable examples: 18 hate, 22 not hate.
CLASS_DISTRIBUTION = """class,count,percent
NotHate,22,55.00
Racist,6,15.00
Sexist,4,10.00
Homophobic,3,7.50
ReligionAttack,3,7.50
OtherHate,2,5.00
"""

BINARY_DISTRIBUTION = """class,count,percent
hate,18,45.00
not_hate,22,55.00
"""

# val 8 and test 12 take half of each from each class.
SPLIT_COUNTS = """split,hate,not_hate
train,8,12
val,4,4
test,6,6
"""


def annotations(spec):
    out = []
    for k, tok in enumerate(spec.split()):
        out.append({"worker_id": f"w{k + 1}", "category": CATS[tok[0]],
                    "duration_seconds": float(tok[1:])})
    return out


def main():
    assert len(ROWS) == 60, len(ROWS)
    with open("corpus.jsonl", "w") as f:
        for (rid, text, rt, image, prob, anns, *_rest) in ROWS:
            rec = {"id": rid, "tweet_text": text, "is_retweet": rt,
                   "image_ref": image, "image_text": "",
                   "image_text_probability": prob,
                   "annotations": annotations(anns)}
            f.write(json.dumps(rec) + "\n")
    with open("expected_outcomes.csv", "w") as f:
        f.write(HEADER + "\n")
        for row in ROWS:
            f.write(",".join([row[0], *row[6:]]) + "\n")
    for name, text in [("expected_keyword_rates.csv", KEYWORD_RATES),
                       ("expected_class_distribution.csv", CLASS_DISTRIBUTION),
                       ("expected_binary_distribution.csv", BINARY_DISTRIBUTION),
                       ("expected_split_counts.csv", SPLIT_COUNTS)]:
        with open(name, "w") as f:
            f.write(text)
    with open("banned_terms.txt", "w") as f:
        f.write("pornword\nxxxsite\n")
    with open("keywords.txt", "w") as f:
        f.write("termy\ntermx\nabsentword\n")


if __name__ == "__main__":
    main()
