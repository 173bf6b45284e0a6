"""Statistics primitives for the analysis step.

summarize() turns a series of observations into the point and interval
estimators plus the five-number boxplot summary used throughout the
reporting stack: sample mean and stddev, a Student-t confidence interval,
Tukey-hinge quartiles and the boxplot notch half-width 1.57*IQR/sqrt(n).

The Student-t quantile is bundled (regularized incomplete beta via a
continued fraction, inverted by bisection) so the runtime has no external
statistics dependency; accuracy is well beyond six digits for any
realistic n (the tests compare against scipy to 1e-9).
"""

import math
from dataclasses import dataclass


@dataclass
class MetricSummary:
    name: str
    n: int
    mean: float
    stddev: float
    confidence: float
    ci_low: float
    ci_high: float
    minimum: float
    q1: float
    median: float
    q3: float
    maximum: float
    notch: float
    ci_degenerate: bool = False     # n == 1: zero-width CI by convention

    def to_doc(self) -> dict:
        return {
            "name": self.name, "n": self.n, "mean": self.mean,
            "stddev": self.stddev, "confidence": self.confidence,
            "ci_low": self.ci_low, "ci_high": self.ci_high,
            "min": self.minimum, "q1": self.q1, "median": self.median,
            "q3": self.q3, "max": self.maximum, "notch": self.notch,
            "ci_degenerate": self.ci_degenerate,
        }


# --- Student-t machinery ----------------------------------------------------

def _betacf(a: float, b: float, x: float) -> float:
    # continued fraction for the incomplete beta (modified Lentz)
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 400):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 3e-15:
            break
    return h


def _betai(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_bt = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
             + a * math.log(x) + b * math.log1p(-x))
    bt = math.exp(ln_bt)
    if x < (a + 1.0) / (a + b + 2.0):
        return bt * _betacf(a, b, x) / a
    return 1.0 - bt * _betacf(b, a, 1.0 - x) / b


def student_t_cdf(t: float, df: float) -> float:
    if df <= 0:
        raise ValueError("degrees of freedom must be positive")
    if t == 0.0:
        return 0.5
    x = df / (df + t * t)
    tail = 0.5 * _betai(df / 2.0, 0.5, x)
    return tail if t < 0 else 1.0 - tail


def student_t_ppf(p: float, df: float) -> float:
    """Inverse CDF of Student's t. Exact symmetry around p = 0.5."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must be in (0, 1)")
    if df <= 0:
        raise ValueError("degrees of freedom must be positive")
    if p == 0.5:
        return 0.0
    if p < 0.5:
        return -student_t_ppf(1.0 - p, df)
    lo, hi = 0.0, 1.0
    while student_t_cdf(hi, df) < p:
        hi *= 2.0
        if hi > 1e308:
            return math.inf
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if student_t_cdf(mid, df) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def normal_ppf(p: float) -> float:
    """Inverse standard normal CDF (Acklam's rational fit + Newton polish)."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must be in (0, 1)")
    a = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
         1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
    b = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
         6.680131188771972e+01, -1.328068155288572e+01)
    c = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
         -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
    d = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
         3.754408661907416e+00)
    p_low = 0.02425
    if p < p_low:
        q = math.sqrt(-2.0 * math.log(p))
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) \
            / ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
    elif p <= 1.0 - p_low:
        q = p - 0.5
        r = q * q
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q \
            / (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0)
    else:
        q = math.sqrt(-2.0 * math.log1p(-p))
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) \
            / ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
    # two Newton steps bring the fit to machine precision; evaluate the CDF
    # through whichever erfc tail avoids cancellation
    for _ in range(2):
        if p < 0.5:
            err = 0.5 * math.erfc(-x / math.sqrt(2.0)) - p
        else:
            err = (1.0 - p) - 0.5 * math.erfc(x / math.sqrt(2.0))
        x -= err * math.sqrt(2.0 * math.pi) * math.exp(0.5 * x * x)
    return x


# --- estimators --------------------------------------------------------------

def sample_mean(values) -> float:
    return math.fsum(values) / len(values)


def sample_stddev(values) -> float:
    """Sample standard deviation (n-1 denominator); 0.0 for n == 1."""
    n = len(values)
    if n < 2:
        return 0.0
    m = sample_mean(values)
    return math.sqrt(math.fsum((v - m) ** 2 for v in values) / (n - 1))


def _median_of(sorted_values, lo: int, hi: int) -> float:
    # median of sorted_values[lo:hi]
    n = hi - lo
    mid = lo + n // 2
    if n % 2:
        return float(sorted_values[mid])
    return (sorted_values[mid - 1] + sorted_values[mid]) / 2.0


def tukey_hinges(values) -> tuple[float, float, float]:
    """(lower hinge, median, upper hinge); odd-length halves include the
    median element in both halves."""
    if not values:
        raise ValueError("empty input")
    data = sorted(values)
    n = len(data)
    median = _median_of(data, 0, n)
    half = (n + 1) // 2
    q1 = _median_of(data, 0, half)
    q3 = _median_of(data, n - half, n)
    return q1, median, q3


def summarize(values, confidence: float = 0.95, name: str = "") -> MetricSummary:
    """Point and interval estimators plus the five-number boxplot summary."""
    values = [float(v) for v in values]
    if not values:
        raise ValueError("empty input")
    if not 0.0 < confidence < 1.0:
        raise ValueError("confidence must be in (0, 1)")
    n = len(values)
    mean = sample_mean(values)
    stddev = sample_stddev(values)
    if n == 1:
        half = 0.0
        degenerate = True
    else:
        half = student_t_ppf((1.0 + confidence) / 2.0, n - 1) * stddev / math.sqrt(n)
        degenerate = False
    q1, median, q3 = tukey_hinges(values)
    notch = 1.57 * (q3 - q1) / math.sqrt(n)
    return MetricSummary(
        name=name, n=n, mean=mean, stddev=stddev, confidence=confidence,
        ci_low=mean - half, ci_high=mean + half,
        minimum=min(values), q1=q1, median=median, q3=q3,
        maximum=max(values), notch=notch, ci_degenerate=degenerate,
    )


def histogram(values, bin_width: float) -> list[tuple[float, int]]:
    """Left-closed right-open bins anchored at 0, contiguous through the
    last occupied bin; bin counts sum to len(values)."""
    if bin_width <= 0:
        raise ValueError("bin width must be positive")
    values = [float(v) for v in values]
    if any(v < 0 for v in values):
        raise ValueError("histogram values must be non-negative")
    if not values:
        return []
    counts: dict[int, int] = {}
    for v in values:
        k = int(v // bin_width)
        # settle exact boundary cases by the interval definition, not by
        # floating division alone
        while v < k * bin_width:
            k -= 1
        while v >= (k + 1) * bin_width:
            k += 1
        counts[k] = counts.get(k, 0) + 1
    top = max(counts)
    return [(k * bin_width, counts.get(k, 0)) for k in range(0, top + 1)]
