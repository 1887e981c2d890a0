"""Python surface of the PPA estimation pipeline (thin wrapper over _rtlppa)."""

try:
    # installed layout: extension lives inside the package
    from ._rtlppa import (
        PipelineError,
        format_percent,
        generate_dataset,
        huber_grad,
        huber_loss,
        lex_count,
        pass_rate,
        predict_source,
        relative_error,
        repair_source,
        syntax_errors,
        train_model,
    )
except ImportError:
    # build-tree layout: extension sits next to the package on sys.path
    from _rtlppa import (
        PipelineError,
        format_percent,
        generate_dataset,
        huber_grad,
        huber_loss,
        lex_count,
        pass_rate,
        predict_source,
        relative_error,
        repair_source,
        syntax_errors,
        train_model,
    )

__all__ = [
    "PipelineError",
    "format_percent",
    "generate_dataset",
    "huber_grad",
    "huber_loss",
    "lex_count",
    "pass_rate",
    "predict_source",
    "relative_error",
    "repair_source",
    "syntax_errors",
    "train_model",
]
