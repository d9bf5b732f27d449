/**
 * Minimal deterministic SVG plotting. No DOM, no randomness, fixed
 * styles and number formatting so identical inputs give identical bytes.
 */

export interface Series {
  label: string;
  x: number[];
  y: number[];
}

export interface PlotOptions {
  title: string;
  xLabel: string;
  yLabel: string;
  xLog?: boolean;
  yLog?: boolean;
  annotations?: string[];
  width?: number;
  height?: number;
  markers?: boolean;
}

const PALETTE = ["#29527a", "#b3422e", "#3a7d44", "#8452a3", "#b08a2e", "#487b8f"];
const MARGIN = { left: 64, right: 16, top: 34, bottom: 44 };

function fmt(v: number): string {
  if (!Number.isFinite(v)) return "0";
  return v.toFixed(2);
}

function fmtTick(v: number): string {
  const a = Math.abs(v);
  if (a !== 0 && (a >= 1e4 || a < 1e-3)) return v.toExponential(0);
  return String(Number(v.toPrecision(4)));
}

function niceTicks(lo: number, hi: number, n = 5): number[] {
  if (!(hi > lo)) return [lo];
  const span = hi - lo;
  const step0 = span / n;
  const mag = Math.pow(10, Math.floor(Math.log10(step0)));
  const step = [1, 2, 5, 10].map((m) => m * mag).find((s) => span / s <= n + 1) ?? mag * 10;
  const first = Math.ceil(lo / step) * step;
  const ticks: number[] = [];
  for (let t = first; t <= hi + 1e-12 * span; t += step) ticks.push(t);
  return ticks;
}

function logTicks(lo: number, hi: number): number[] {
  const ticks: number[] = [];
  for (let e = Math.ceil(lo - 1e-9); e <= Math.floor(hi + 1e-9); e++) {
    ticks.push(e);
  }
  return ticks.length > 0 ? ticks : [lo];
}

export function renderPlot(series: Series[], opts: PlotOptions): string {
  const W = opts.width ?? 640;
  const H = opts.height ?? 420;
  const innerW = W - MARGIN.left - MARGIN.right;
  const innerH = H - MARGIN.top - MARGIN.bottom;

  const tx = (v: number) => (opts.xLog ? Math.log10(v) : v);
  const ty = (v: number) => (opts.yLog ? Math.log10(v) : v);

  const pts = series.flatMap((s) =>
    s.x.map((xv, i) => [xv, s.y[i]] as const).filter(
      ([xv, yv]) =>
        Number.isFinite(xv) &&
        Number.isFinite(yv) &&
        (!opts.xLog || xv > 0) &&
        (!opts.yLog || yv > 0)
    )
  );
  if (pts.length === 0) {
    throw new Error("nothing to plot: no finite points (log axes drop non-positives)");
  }
  let xLo = Math.min(...pts.map(([x]) => tx(x)));
  let xHi = Math.max(...pts.map(([x]) => tx(x)));
  let yLo = Math.min(...pts.map(([, y]) => ty(y)));
  let yHi = Math.max(...pts.map(([, y]) => ty(y)));
  if (xHi === xLo) {
    xLo -= 0.5;
    xHi += 0.5;
  }
  if (yHi === yLo) {
    yLo -= 0.5;
    yHi += 0.5;
  }
  const padY = 0.06 * (yHi - yLo);
  yLo -= padY;
  yHi += padY;

  const px = (v: number) => MARGIN.left + ((tx(v) - xLo) / (xHi - xLo)) * innerW;
  const py = (v: number) => MARGIN.top + (1 - (ty(v) - yLo) / (yHi - yLo)) * innerH;

  const out: string[] = [];
  out.push(
    `<svg xmlns="http://www.w3.org/2000/svg" width="${W}" height="${H}" ` +
      `viewBox="0 0 ${W} ${H}" font-family="Helvetica,Arial,sans-serif">`
  );
  out.push(`<rect width="${W}" height="${H}" fill="#ffffff"/>`);
  out.push(
    `<text x="${MARGIN.left}" y="20" font-size="14" fill="#222">${escapeXml(opts.title)}</text>`
  );

  const xTicks = opts.xLog ? logTicks(xLo, xHi) : niceTicks(xLo, xHi);
  const yTicks = opts.yLog ? logTicks(yLo, yHi) : niceTicks(yLo, yHi);
  for (const t of xTicks) {
    const x = MARGIN.left + ((t - xLo) / (xHi - xLo)) * innerW;
    out.push(
      `<line x1="${fmt(x)}" y1="${MARGIN.top}" x2="${fmt(x)}" ` +
        `y2="${MARGIN.top + innerH}" stroke="#dddddd" stroke-width="1"/>`
    );
    const label = opts.xLog ? `1e${fmtTick(t)}` : fmtTick(t);
    out.push(
      `<text x="${fmt(x)}" y="${MARGIN.top + innerH + 16}" font-size="10" ` +
        `fill="#444" text-anchor="middle">${label}</text>`
    );
  }
  for (const t of yTicks) {
    const y = MARGIN.top + (1 - (t - yLo) / (yHi - yLo)) * innerH;
    out.push(
      `<line x1="${MARGIN.left}" y1="${fmt(y)}" x2="${MARGIN.left + innerW}" ` +
        `y2="${fmt(y)}" stroke="#dddddd" stroke-width="1"/>`
    );
    const label = opts.yLog ? `1e${fmtTick(t)}` : fmtTick(t);
    out.push(
      `<text x="${MARGIN.left - 6}" y="${fmt(y + 3)}" font-size="10" ` +
        `fill="#444" text-anchor="end">${label}</text>`
    );
  }
  out.push(
    `<rect x="${MARGIN.left}" y="${MARGIN.top}" width="${innerW}" height="${innerH}" ` +
      `fill="none" stroke="#555555"/>`
  );
  out.push(
    `<text x="${MARGIN.left + innerW / 2}" y="${H - 8}" font-size="11" fill="#222" ` +
      `text-anchor="middle">${escapeXml(opts.xLabel)}</text>`
  );
  out.push(
    `<text x="14" y="${MARGIN.top + innerH / 2}" font-size="11" fill="#222" ` +
      `text-anchor="middle" transform="rotate(-90 14 ${MARGIN.top + innerH / 2})">` +
      `${escapeXml(opts.yLabel)}</text>`
  );

  series.forEach((s, si) => {
    const color = PALETTE[si % PALETTE.length];
    const coords = s.x
      .map((xv, i) => [xv, s.y[i]] as const)
      .filter(
        ([xv, yv]) =>
          Number.isFinite(xv) &&
          Number.isFinite(yv) &&
          (!opts.xLog || xv > 0) &&
          (!opts.yLog || yv > 0)
      )
      .map(([xv, yv]) => `${fmt(px(xv))},${fmt(py(yv))}`);
    if (coords.length > 1) {
      out.push(
        `<polyline points="${coords.join(" ")}" fill="none" stroke="${color}" ` +
          `stroke-width="1.5"/>`
      );
    }
    if (opts.markers ?? true) {
      for (const c of coords) {
        const [cx, cy] = c.split(",");
        out.push(`<circle cx="${cx}" cy="${cy}" r="2.2" fill="${color}"/>`);
      }
    }
    out.push(
      `<text x="${MARGIN.left + innerW - 8}" y="${MARGIN.top + 14 + 13 * si}" ` +
        `font-size="11" fill="${color}" text-anchor="end">${escapeXml(s.label)}</text>`
    );
  });

  (opts.annotations ?? []).forEach((a, i) => {
    out.push(
      `<text x="${MARGIN.left + 8}" y="${MARGIN.top + 14 + 13 * i}" font-size="11" ` +
        `fill="#333">${escapeXml(a)}</text>`
    );
  });
  out.push("</svg>");
  return out.join("\n") + "\n";
}

function escapeXml(s: string): string {
  return s
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

/** Least-squares slope of log10(y) against log10(x), for annotations. */
export function fitLogLogSlope(x: number[], y: number[]): number {
  const pts = x
    .map((xv, i) => [xv, y[i]] as const)
    .filter(([a, b]) => a > 0 && b > 0 && Number.isFinite(a) && Number.isFinite(b));
  if (pts.length < 2) return NaN;
  const lx = pts.map(([a]) => Math.log10(a));
  const ly = pts.map(([, b]) => Math.log10(b));
  const mx = lx.reduce((s, v) => s + v, 0) / lx.length;
  const my = ly.reduce((s, v) => s + v, 0) / ly.length;
  let num = 0;
  let den = 0;
  for (let i = 0; i < lx.length; i++) {
    num += (lx[i] - mx) * (ly[i] - my);
    den += (lx[i] - mx) ** 2;
  }
  return num / den;
}
