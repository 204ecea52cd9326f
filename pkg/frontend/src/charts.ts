// Dependency-free SVG string builders. Each function is pure: same data in,
// same markup out, which is what the rendering tests rely on.

export interface ChartDatum {
  label: string;
  value: number;
}

export interface LineSeries {
  label: string;
  points: number[];
  cssClass: string;
}

export function escapeXml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&apos;");
}

function round(value: number): string {
  return (Math.round(value * 100) / 100).toString();
}

/**
 * Horizontal bars growing left (negative) or right (positive) from a zero
 * axis. Used for signed attribution values; the axis position is marked so
 * the base value can be annotated next to it.
 */
export function signedBarChart(data: ChartDatum[], caption: string): string {
  const barHeight = 18;
  const gap = 6;
  const labelWidth = 210;
  const plotWidth = 280;
  const width = labelWidth + plotWidth;
  const height = data.length * (barHeight + gap) + gap;
  const axisX = labelWidth + plotWidth / 2;
  const maxAbs = Math.max(1e-12, ...data.map((d) => Math.abs(d.value)));
  const scale = plotWidth / 2 / maxAbs;

  const parts: string[] = [];
  data.forEach((datum, i) => {
    const y = gap + i * (barHeight + gap);
    const length = Math.abs(datum.value) * scale;
    const x = datum.value < 0 ? axisX - length : axisX;
    const polarity = datum.value < 0 ? "bar-negative" : "bar-positive";
    parts.push(
      `<text class="bar-label" x="${labelWidth - 8}" y="${round(y + barHeight * 0.72)}" text-anchor="end">${escapeXml(datum.label)}</text>`,
      `<rect class="bar ${polarity}" x="${round(x)}" y="${y}" width="${round(length)}" height="${barHeight}"></rect>`,
      `<text class="bar-value" x="${round(datum.value < 0 ? x - 4 : x + length + 4)}" y="${round(y + barHeight * 0.72)}" text-anchor="${datum.value < 0 ? "end" : "start"}">${round(datum.value)}</text>`,
    );
  });
  parts.push(`<line class="axis" x1="${axisX}" y1="0" x2="${axisX}" y2="${height}"></line>`);
  return svg(width, height, caption, parts);
}

/** Vertical columns with the label under and the value above each bar. */
export function columnChart(data: ChartDatum[], caption: string): string {
  const columnWidth = 34;
  const gap = 14;
  const plotHeight = 120;
  const textRoom = 18;
  const width = gap + data.length * (columnWidth + gap);
  const height = plotHeight + 2 * textRoom;
  const maxValue = Math.max(1e-12, ...data.map((d) => d.value));

  const parts: string[] = [];
  data.forEach((datum, i) => {
    const x = gap + i * (columnWidth + gap);
    const barHeight = (datum.value / maxValue) * plotHeight;
    const y = textRoom + plotHeight - barHeight;
    const center = x + columnWidth / 2;
    parts.push(
      `<rect class="column" x="${x}" y="${round(y)}" width="${columnWidth}" height="${round(barHeight)}"></rect>`,
      `<text class="column-value" x="${center}" y="${round(y - 4)}" text-anchor="middle">${round(datum.value)}</text>`,
      `<text class="column-label" x="${center}" y="${height - 4}" text-anchor="middle">${escapeXml(datum.label)}</text>`,
    );
  });
  parts.push(
    `<line class="axis" x1="0" y1="${textRoom + plotHeight}" x2="${width}" y2="${textRoom + plotHeight}"></line>`,
  );
  return svg(width, height, caption, parts);
}

/** Donut chart; slices below one permille of the total are skipped. */
export function pieChart(data: ChartDatum[], caption: string): string {
  const size = 180;
  const cx = size / 2;
  const cy = size / 2;
  const radius = 80;
  const total = data.reduce((sum, d) => sum + d.value, 0);
  const parts: string[] = [];
  if (total <= 0) {
    return svg(size, size, caption, [`<text x="${cx}" y="${cy}" text-anchor="middle">no data</text>`]);
  }

  let angle = -Math.PI / 2;
  data.forEach((datum, i) => {
    const share = datum.value / total;
    if (share < 0.001) {
      return;
    }
    if (share > 0.999) {
      parts.push(`<circle class="slice slice-${i}" cx="${cx}" cy="${cy}" r="${radius}"></circle>`);
      return;
    }
    const end = angle + share * 2 * Math.PI;
    const x1 = cx + radius * Math.cos(angle);
    const y1 = cy + radius * Math.sin(angle);
    const x2 = cx + radius * Math.cos(end);
    const y2 = cy + radius * Math.sin(end);
    const largeArc = share > 0.5 ? 1 : 0;
    parts.push(
      `<path class="slice slice-${i}" d="M ${cx} ${cy} L ${round(x1)} ${round(y1)} A ${radius} ${radius} 0 ${largeArc} 1 ${round(x2)} ${round(y2)} Z"><title>${escapeXml(datum.label)}: ${round(datum.value)}</title></path>`,
    );
    angle = end;
  });
  return svg(size, size, caption, parts);
}

/**
 * One polyline per series over a shared index axis; series may have
 * different lengths (e.g. a student's clipped window against full-semester
 * cohort means).
 */
export function lineChart(series: LineSeries[], caption: string): string {
  const width = 360;
  const plotHeight = 140;
  const pad = 10;
  const height = plotHeight + 2 * pad;
  const weeks = Math.max(2, ...series.map((s) => s.points.length));
  const maxValue = Math.max(1e-12, ...series.flatMap((s) => s.points));
  const xStep = (width - 2 * pad) / (weeks - 1);

  const parts: string[] = [
    `<line class="axis" x1="${pad}" y1="${pad + plotHeight}" x2="${width - pad}" y2="${pad + plotHeight}"></line>`,
  ];
  for (const entry of series) {
    const points = entry.points
      .map((value, i) => {
        const x = pad + i * xStep;
        const y = pad + plotHeight - (value / maxValue) * plotHeight;
        return `${round(x)},${round(y)}`;
      })
      .join(" ");
    parts.push(
      `<polyline class="series ${entry.cssClass}" fill="none" points="${points}"><title>${escapeXml(entry.label)}</title></polyline>`,
    );
  }
  return svg(width, height, caption, parts);
}

function svg(width: number, height: number, caption: string, parts: string[]): string {
  return (
    `<svg viewBox="0 0 ${width} ${height}" width="${width}" height="${height}" role="img" aria-label="${escapeXml(caption)}">` +
    parts.join("") +
    "</svg>"
  );
}
