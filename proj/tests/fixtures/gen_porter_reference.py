"""Freeze Porter stems from NLTK (Martin Porter's reference-implementation mode).

Run from this directory: python3 gen_porter_reference.py > porter_reference.json
"""
import json
import re

import nltk
from nltk.stem.porter import PorterStemmer

classic = """caresses ponies ties caress cats feed agreed plastered bled motoring sing conflated troubled
sized hopping tanned falling hissing fizzed failing filing happy sky relational conditional rational
valenci hesitanci digitizer conformabli radicalli differentli vileli analogousli vietnamization
predication operator feudalism decisiveness hopefulness callousness formaliti sensitiviti sensibiliti
triplicate formative formalize electriciti electrical hopeful goodness revival allowance inference
airliner gyroscopic adjustable defensible irritant replacement adjustment dependent adoption homologou
communism activate angulariti homologous effective bowdlerize probate rate cease controll roll
generalizations oscillators archaeology knightly generously abilities a is as by"""

words = set(classic.split())
for line in open("../../data/passages.jsonl"):
    words.update(re.findall(r"[a-z]+", json.loads(line)["text"].lower()))

stemmer = PorterStemmer(mode=PorterStemmer.MARTIN_EXTENSIONS)
print(json.dumps({"generator": {"nltk": nltk.__version__, "mode": "MARTIN_EXTENSIONS"},
                  "stems": {w: stemmer.stem(w) for w in sorted(words)}}, indent=0, sort_keys=True))
