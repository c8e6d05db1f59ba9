/** Minimal SVG line-chart helpers. Pure coordinate transforms only —
 * the values themselves come from the API untouched. */

export interface ChartBox {
  width: number;
  height: number;
  pad: number;
}

export interface Scale {
  min: number;
  max: number;
}

export function seriesScale(values: number[]): Scale {
  if (values.length === 0) return { min: 0, max: 1 };
  let min = Math.min(...values);
  let max = Math.max(...values);
  if (min === max) {
    // Flat series: center it instead of dividing by zero.
    min -= 1;
    max += 1;
  }
  return { min, max };
}

export function toX(ts: number, scale: Scale, box: ChartBox): number {
  const span = scale.max - scale.min;
  return box.pad + ((ts - scale.min) / span) * (box.width - 2 * box.pad);
}

export function toY(value: number, scale: Scale, box: ChartBox): number {
  const span = scale.max - scale.min;
  const h = box.height - 2 * box.pad;
  return box.height - box.pad - ((value - scale.min) / span) * h;
}

/** "x1,y1 x2,y2 ..." for an SVG polyline, or "" for an empty series. */
export function polylinePoints(
  points: [number, number][],
  box: ChartBox,
): string {
  if (points.length === 0) return "";
  const xScale = seriesScale(points.map(([ts]) => ts));
  const yScale = seriesScale(points.map(([, v]) => v));
  return points
    .map(([ts, v]) => {
      const x = toX(ts, xScale, box).toFixed(1);
      const y = toY(v, yScale, box).toFixed(1);
      return `${x},${y}`;
    })
    .join(" ");
}

export function axisTicks(scale: Scale, count = 4): number[] {
  const span = scale.max - scale.min;
  return Array.from({ length: count + 1 }, (_, i) =>
    scale.min + (span * i) / count,
  );
}
