// SVG chart builders for plot-data documents.
//
// The server computes every statistic; these functions place the provided
// numbers on screen and label them verbatim. Each mark carries data-*
// attributes with the exact field values so fidelity is testable.

import { svgEl } from "./dom.js";
import type { BoxplotSeries, HistogramDoc, MonitoringSample } from "./types.js";

export interface Scale {
  lo: number;
  hi: number;
  px0: number;
  px1: number;
}

export function position(scale: Scale, value: number): number {
  if (scale.hi === scale.lo) return (scale.px0 + scale.px1) / 2;
  return scale.px0 +
    ((value - scale.lo) / (scale.hi - scale.lo)) * (scale.px1 - scale.px0);
}

export function boxplotSvg(series: BoxplotSeries, width = 460,
                           height = 140): SVGElement {
  const pad = 50;
  const scale: Scale = {
    lo: Math.min(series.min, series.ci_low),
    hi: Math.max(series.max, series.ci_high),
    px0: pad,
    px1: width - pad,
  };
  const x = (v: number) => position(scale, v);
  const midY = 62;
  const boxTop = 40;
  const boxBottom = 84;
  const notchInset = 14;

  const svg = svgEl("svg", {
    width: String(width),
    height: String(height),
    class: "boxplot",
    "data-name": series.name,
    "data-n": String(series.n),
  });

  const whisker = (value: number, role: string) => {
    const g = svgEl("g", { "data-role": role, "data-value": String(value) });
    g.append(
      svgEl("line", {
        x1: String(x(value)), x2: String(x(value)),
        y1: String(boxTop + 6), y2: String(boxBottom - 6),
        class: "whisker",
      }),
    );
    return g;
  };

  // whisker-to-box connectors
  svg.append(svgEl("line", {
    x1: String(x(series.min)), x2: String(x(series.q1)),
    y1: String(midY), y2: String(midY), class: "whisker-line",
  }));
  svg.append(svgEl("line", {
    x1: String(x(series.q3)), x2: String(x(series.max)),
    y1: String(midY), y2: String(midY), class: "whisker-line",
  }));
  svg.append(whisker(series.min, "min"));
  svg.append(whisker(series.max, "max"));

  // notched box: both edges pinch toward the median between the
  // server-computed notch bounds
  const points = [
    [x(series.q1), boxTop],
    [x(series.notch_low), boxTop],
    [x(series.median), boxTop + notchInset],
    [x(series.notch_high), boxTop],
    [x(series.q3), boxTop],
    [x(series.q3), boxBottom],
    [x(series.notch_high), boxBottom],
    [x(series.median), boxBottom - notchInset],
    [x(series.notch_low), boxBottom],
    [x(series.q1), boxBottom],
  ];
  const box = svgEl("polygon", {
    points: points.map(([px, py]) => `${px},${py}`).join(" "),
    class: "box",
    "data-role": "box",
    "data-q1": String(series.q1),
    "data-q3": String(series.q3),
    "data-notch": String(series.notch),
    "data-notch-low": String(series.notch_low),
    "data-notch-high": String(series.notch_high),
  });
  svg.append(box);

  svg.append(svgEl("line", {
    x1: String(x(series.median)), x2: String(x(series.median)),
    y1: String(boxTop + notchInset), y2: String(boxBottom - notchInset),
    class: "median",
    "data-role": "median",
    "data-value": String(series.median),
  }));

  svg.append(svgEl("circle", {
    cx: String(x(series.mean)), cy: String(midY), r: "4",
    class: "mean",
    "data-role": "mean",
    "data-value": String(series.mean),
  }));

  const ci = svgEl("line", {
    x1: String(x(series.ci_low)), x2: String(x(series.ci_high)),
    y1: String(height - 26), y2: String(height - 26),
    class: "ci",
    "data-role": "ci",
    "data-low": String(series.ci_low),
    "data-high": String(series.ci_high),
  });
  svg.append(ci);

  const label = (value: number, px: number, py: number, role: string) => {
    const text = svgEl("text", {
      x: String(px), y: String(py),
      class: "value-label",
      "data-role": `${role}-label`,
    });
    text.textContent = String(value);
    return text;
  };
  svg.append(label(series.min, x(series.min), boxTop - 8, "min"));
  svg.append(label(series.q1, x(series.q1), boxBottom + 16, "q1"));
  svg.append(label(series.median, x(series.median), boxTop - 8, "median"));
  svg.append(label(series.q3, x(series.q3), boxBottom + 16, "q3"));
  svg.append(label(series.max, x(series.max), boxTop - 8, "max"));
  svg.append(label(series.notch, x(series.median), height - 8, "notch"));

  return svg;
}

export function histogramSvg(doc: HistogramDoc, width = 460,
                             height = 160): SVGElement {
  const pad = 30;
  const bins = doc.bins;
  const svg = svgEl("svg", {
    width: String(width),
    height: String(height),
    class: "histogram",
    "data-bins": String(bins.length),
  });
  if (bins.length === 0) return svg;
  const maxCount = Math.max(...bins.map((b) => b.count), 1);
  const barW = (width - 2 * pad) / bins.length;
  bins.forEach((bin, i) => {
    const barH = ((height - 2 * pad) * bin.count) / maxCount;
    svg.append(svgEl("rect", {
      x: String(pad + i * barW),
      y: String(height - pad - barH),
      width: String(Math.max(1, barW - 2)),
      height: String(barH),
      class: "bar",
      "data-start": String(bin.start),
      "data-count": String(bin.count),
    }));
  });
  const axis = svgEl("text", {
    x: String(pad), y: String(height - 8), class: "axis-label",
  });
  axis.textContent = `bin width ${doc.width}, ${bins.length} bins`;
  svg.append(axis);
  return svg;
}

export function sparklineSvg(samples: MonitoringSample[], width = 120,
                             height = 18): SVGElement {
  const svg = svgEl("svg", {
    width: String(width),
    height: String(height),
    class: "sparkline",
    "data-samples": String(samples.length),
  });
  if (samples.length === 0) return svg;
  const t0 = samples[0].timestamp;
  const t1 = samples[samples.length - 1].timestamp;
  const scale: Scale = { lo: t0, hi: Math.max(t1, t0 + 1), px0: 0, px1: width };
  const y = (up: boolean) => (up ? 3 : height - 3);
  let d = "";
  samples.forEach((sample, i) => {
    const px = position(scale, sample.timestamp);
    const py = y(sample.up);
    d += i === 0 ? `M${px},${py}` : `H${px}V${py}`;
  });
  d += `H${width}`;
  svg.append(svgEl("path", { d, class: "spark" }));
  return svg;
}
