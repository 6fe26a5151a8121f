from torus.exceptions import ConfigurationError, NumericalError  # noqa: F401


class InvalidRunConfig(ConfigurationError):
    """A run configuration failed validation; ``errors`` maps field paths to messages."""

    def __init__(self, errors):
        self.errors = dict(errors)
        detail = '; '.join(f'{path}: {message}' for path, message in sorted(self.errors.items()))
        super().__init__(f'invalid run configuration ({detail})')
