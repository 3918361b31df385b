"""Classification of psychiatric clinical notes into F41 (anxiety) and F43
(adjustment disorder), with from-scratch models and a reproducible CLI."""

__version__ = "0.1.0"
