import type { HistoryRow } from './types.js';

// Dependency-free SVG line chart of the learning curve: labeled images on
// the x axis, accuracy and weighted F1 on the y axis.

const WIDTH = 640;
const HEIGHT = 260;
const PAD = 40;

interface Series {
  name: string;
  color: string;
  points: { x: number; y: number }[];
}

export function historyChartSvg(rows: HistoryRow[]): string {
  if (rows.length === 0) {
    return `<svg width="${WIDTH}" height="${HEIGHT}"><text x="${WIDTH / 2}" y="${
      HEIGHT / 2
    }" text-anchor="middle" fill="#888">no iterations yet</text></svg>`;
  }
  const xs = rows.map((r) => r.labeled_count);
  const xMin = Math.min(...xs);
  const xMax = Math.max(...xs, xMin + 1);
  const sx = (x: number) => PAD + ((x - xMin) / (xMax - xMin)) * (WIDTH - 2 * PAD);
  const sy = (y: number) => HEIGHT - PAD - y * (HEIGHT - 2 * PAD);

  const series: Series[] = [
    {
      name: 'accuracy',
      color: '#2980b9',
      points: rows.map((r) => ({ x: sx(r.labeled_count), y: sy(r.accuracy) })),
    },
    {
      name: 'weighted F1',
      color: '#8e44ad',
      points: rows.map((r) => ({ x: sx(r.labeled_count), y: sy(r.weighted_f1) })),
    },
  ];

  const gridLines = [0, 0.25, 0.5, 0.75, 1.0]
    .map(
      (v) =>
        `<line x1="${PAD}" y1="${sy(v)}" x2="${WIDTH - PAD}" y2="${sy(v)}" stroke="#eee"/>` +
        `<text x="${PAD - 6}" y="${sy(v) + 4}" text-anchor="end" font-size="10" fill="#888">${v.toFixed(2)}</text>`,
    )
    .join('');

  const xLabels = rows
    .map(
      (r) =>
        `<text x="${sx(r.labeled_count)}" y="${HEIGHT - PAD + 14}" text-anchor="middle" font-size="10" fill="#888">${r.labeled_count}</text>`,
    )
    .join('');

  const paths = series
    .map((s) => {
      const d = s.points.map((p, i) => `${i === 0 ? 'M' : 'L'}${p.x.toFixed(1)},${p.y.toFixed(1)}`).join(' ');
      const dots = s.points
        .map((p) => `<circle cx="${p.x.toFixed(1)}" cy="${p.y.toFixed(1)}" r="3" fill="${s.color}"/>`)
        .join('');
      return `<path d="${d}" fill="none" stroke="${s.color}" stroke-width="2"/>${dots}`;
    })
    .join('');

  const legend = series
    .map(
      (s, i) =>
        `<rect x="${PAD + i * 130}" y="8" width="10" height="10" fill="${s.color}"/>` +
        `<text x="${PAD + i * 130 + 14}" y="17" font-size="11" fill="#444">${s.name}</text>`,
    )
    .join('');

  return `<svg width="${WIDTH}" height="${HEIGHT}" viewBox="0 0 ${WIDTH} ${HEIGHT}">${gridLines}${xLabels}${paths}${legend}</svg>`;
}
