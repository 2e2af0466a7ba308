"""Prompt templates for building text proxies from class names."""

SINGLE_TEMPLATE = "a photo of a {}."

# the selected 7-template ensemble; recorded verbatim in every manifest so
# exports stay auditable
ENSEMBLE_TEMPLATES = (
    "itap of a {}.",
    "a bad photo of the {}.",
    "a origami {}.",
    "a photo of the large {}.",
    "a {} in a video game.",
    "art of the {}.",
    "a photo of the small {}.",
)


def templates_for(mode: str):
    if mode == "single":
        return (SINGLE_TEMPLATE,)
    if mode == "ensemble":
        return ENSEMBLE_TEMPLATES
    raise ValueError(f"prompt mode must be 'single' or 'ensemble', got {mode!r}")
