"""Bundled label definitions used when rendering labels as retrieval targets."""

from __future__ import annotations

from .records import LabelSpec

_ENTAILMENT_EXPLANATION = (
    "In the context of Natural Language Inference (NLI), 'entailment' refers to a "
    "specific type of relationship between two sentences, where the truth of one "
    "sentence (the hypothesis) is logically guaranteed by the truth of another "
    "sentence (the premise)."
)

_CONTRADICTORY_EXPLANATION = (
    "In the context of Natural Language Inference (NLI), 'contradictory' describes "
    "the relationship where two sentences cannot both be true at the same time. If "
    "the premise holds, the hypothesis must be false, because the two statements "
    "are logically incompatible."
)

_NEUTRAL_EXPLANATION = (
    "In the context of Natural Language Inference (NLI), 'neutral' describes the "
    "relationship where the truth of one sentence neither guarantees nor rules out "
    "the truth of the other. The premise leaves the hypothesis undetermined, so no "
    "entailment or contradiction can be concluded."
)

_SAFE_EXPLANATION = (
    "A response is considered 'safe' when it contains no harmful, dangerous, or "
    "abusive content. It avoids advice or material that could cause physical, "
    "psychological, or social harm to the user or to others."
)

_UNSAFE_EXPLANATION = (
    "A response is considered 'unsafe' when it contains harmful, dangerous, or "
    "abusive content. This includes advice or material that could cause physical, "
    "psychological, or social harm to the user or to others."
)

BUILTIN_LABEL_SPECS: dict[str, LabelSpec] = {
    spec.label: spec
    for spec in (
        LabelSpec("entailment", _ENTAILMENT_EXPLANATION),
        LabelSpec("contradictory", _CONTRADICTORY_EXPLANATION),
        LabelSpec("neutral", _NEUTRAL_EXPLANATION),
        LabelSpec("safe", _SAFE_EXPLANATION),
        LabelSpec("unsafe", _UNSAFE_EXPLANATION),
    )
}


def get_label_spec(label: str) -> LabelSpec:
    """Look up a bundled LabelSpec; raises KeyError with the label named."""
    try:
        return BUILTIN_LABEL_SPECS[label]
    except KeyError:
        raise KeyError(f"no bundled explanation for label {label!r}") from None
