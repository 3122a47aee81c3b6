import sys
from typing import Any, Dict, Mapping, Optional


class Display:
    def __init__(self, stream=None):
        self.stream = stream or sys.stdout
        self.use_colors = hasattr(self.stream, "isatty") and self.stream.isatty()

    def _color(self, text: str, code: str) -> str:
        if not self.use_colors:
            return text
        return f"\033[{code}m{text}\033[0m"

    def print(self, text: str = ""):
        print(text, file=self.stream)

    def error(self, text: str, hint: Optional[str] = None):
        print(self._color(f"Error: {text}", "91"), file=sys.stderr)
        if hint:
            print(f"  hint: {hint}", file=sys.stderr)

    def warning(self, text: str):
        print(self._color(f"Warning: {text}", "93"), file=sys.stderr)

    def heading(self, text: str):
        print(self._color(text, "1"), file=self.stream)

    def success(self, text: str):
        print(self._color(text, "92"), file=self.stream)

    def written(self, label: str, path: Any):
        print(f"  {label:<10} {path}", file=self.stream)

    def timing_table(self, report: Mapping[str, Mapping[str, Any]], ratio: Optional[float]):
        """Generation time per provenance: min, mean, max and count."""
        self.heading(f"{'provenance':<12}{'min [s]':>12}{'avg [s]':>12}{'max [s]':>12}{'count':>8}")
        for name, row in report.items():
            print(
                f"{name:<12}{row['min']:>12.4g}{row['avg']:>12.4g}{row['max']:>12.4g}{row['count']:>8d}",
                file=self.stream,
            )
        if ratio is not None:
            print(f"speedup (full-nlp / predictor average): {ratio:.1f}x", file=self.stream)

    def metrics(self, values: Dict[str, Any]):
        width = max((len(k) for k in values), default=0)
        for key, value in values.items():
            if isinstance(value, float):
                value = f"{value:.4g}"
            print(f"  {key:<{width}}  {value}", file=self.stream)
