"""Label tables of the corpus interchange format.

Span JSON stores category member names; tag strings in the TSV
interchange use the display labels below.  Order fixes the id spaces for
both heads: O first, then a B/I pair per category.
"""

SENTINEL = -100

ARG_TYPES = {
    "NonContestation": "Non contestation",
    "TextualInterpretation": "Textual interpretation",
    "SystematicInterpretation": "Systematic interpretation",
    "TeleologicalInterpretation": "Teleological interpretation",
    "ComparativeLaw": "Comparative law",
    "LegalBasis": "Legal basis",
    "LegitimatePurpose": "Legitimate purpose",
    "Suitability": "Suitability",
    "NecessityProportionality": "Necessity/Proportionality",
    "Overruling": "Overruling",
    "Distinguishing": "Distinguishing",
    "MarginOfAppreciation": "Margin of Appreciation",
    "PrecedentsECHR": "Precedents ECHR",
    "DecisionECHR": "Decision ECHR",
    "ApplicationCase": "Application case",
}

ACTORS = {
    "ECHR": "ECHR",
    "Applicant": "Applicant",
    "State": "State",
    "ThirdParties": "Third parties",
    "CommissionChamber": "Commission/Chamber",
}


def _tags(table):
    out = ["O"]
    for label in table.values():
        out.append(f"B-{label}")
        out.append(f"I-{label}")
    return out


ARG_TAGS = _tags(ARG_TYPES)
ACTOR_TAGS = _tags(ACTORS)
ARG_TAG_IDS = {t: i for i, t in enumerate(ARG_TAGS)}
ACTOR_TAG_IDS = {t: i for i, t in enumerate(ACTOR_TAGS)}

HEADS = ("arg", "actor")


def tags_for(head: str):
    if head == "arg":
        return ARG_TAGS
    if head == "actor":
        return ACTOR_TAGS
    raise ValueError(f"unknown head {head!r}")
