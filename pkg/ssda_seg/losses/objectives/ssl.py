from .ssda import SSDAObjective


class SSLObjective(SSDAObjective):
    """The SSDA objective with the source data dropped."""

    uses_source = False
