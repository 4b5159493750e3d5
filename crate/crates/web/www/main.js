import init, { demoSignal, denoise, graphKappa, conditionSweep } from "./pkg/dictlasso_web.js";

const COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

// Draws series of [x, y] points; logX/logY switch the axes to log10.
function drawLines(canvas, series, { logX = false, logY = false, xLabel = "", yLabel = "" } = {}) {
  const ctx = canvas.getContext("2d");
  const W = canvas.width, H = canvas.height, L = 55, R = 15, T = 15, B = 35;
  ctx.clearRect(0, 0, W, H);
  const tx = (v) => (logX ? Math.log10(v) : v);
  const ty = (v) => (logY ? Math.log10(v) : v);
  const pts = series.flatMap((s) => s.points).filter(([x, y]) => isFinite(tx(x)) && isFinite(ty(y)));
  if (pts.length === 0) return;
  let [x0, x1] = [Math.min(...pts.map((p) => tx(p[0]))), Math.max(...pts.map((p) => tx(p[0])))];
  let [y0, y1] = [Math.min(...pts.map((p) => ty(p[1]))), Math.max(...pts.map((p) => ty(p[1])))];
  if (x1 - x0 < 1e-12) { x0 -= 0.5; x1 += 0.5; }
  if (y1 - y0 < 1e-12) { y0 -= 0.5; y1 += 0.5; }
  const pad = 0.05 * (y1 - y0);
  y0 -= pad; y1 += pad;
  const px = (v) => L + ((tx(v) - x0) / (x1 - x0)) * (W - L - R);
  const py = (v) => T + (1 - (ty(v) - y0) / (y1 - y0)) * (H - T - B);

  ctx.strokeStyle = "#000";
  ctx.strokeRect(L, T, W - L - R, H - T - B);
  ctx.fillStyle = "#000";
  ctx.font = "12px sans-serif";
  ctx.textAlign = "center";
  ctx.fillText(xLabel, L + (W - L - R) / 2, H - 5);
  for (let i = 0; i <= 4; i++) {
    const vx = x0 + ((x1 - x0) * i) / 4, vy = y0 + ((y1 - y0) * i) / 4;
    const lx = logX ? 10 ** vx : vx, ly = logY ? 10 ** vy : vy;
    ctx.textAlign = "center";
    ctx.fillText(lx.toPrecision(3), L + ((W - L - R) * i) / 4, H - B + 15);
    ctx.textAlign = "right";
    ctx.fillText(ly.toPrecision(3), L - 5, T + (1 - i / 4) * (H - T - B) + 4);
  }
  ctx.save();
  ctx.translate(12, T + (H - T - B) / 2);
  ctx.rotate(-Math.PI / 2);
  ctx.textAlign = "center";
  ctx.fillText(yLabel, 0, 0);
  ctx.restore();

  series.forEach((s, i) => {
    ctx.strokeStyle = s.color || COLORS[i % COLORS.length];
    ctx.lineWidth = s.width || 2;
    ctx.beginPath();
    s.points.forEach(([x, y], j) => (j === 0 ? ctx.moveTo(px(x), py(y)) : ctx.lineTo(px(x), py(y))));
    ctx.stroke();
    ctx.fillStyle = ctx.strokeStyle;
    ctx.textAlign = "left";
    ctx.fillText(s.label, L + 10, T + 15 + 15 * i);
  });
}

const $ = (id) => document.getElementById(id);
const indexed = (ys) => ys.map((y, i) => [i, y]);

let signal = null;
let seed = 1;

function runDenoise() {
  const lambda = 10 ** Number($("lambda").value);
  $("lambda-value").textContent = lambda.toPrecision(3);
  const weight = $("fused").checked ? 0.2 : 0;
  try {
    const t0 = performance.now();
    const out = JSON.parse(denoise(Float64Array.from(signal.noisy), lambda, weight));
    drawLines($("denoise-canvas"), [
      { label: "noisy", points: indexed(signal.noisy), color: "#bbb", width: 1 },
      { label: "clean", points: indexed(signal.clean), color: "#2ca02c", width: 1 },
      { label: "estimate", points: indexed(out.theta), color: "#d62728" },
    ], { xLabel: "index", yLabel: "value" });
    $("denoise-status").textContent =
      `${out.iterations} iterations, ${out.converged ? "converged" : "not converged"}, ${(performance.now() - t0).toFixed(0)} ms`;
  } catch (e) {
    $("denoise-status").textContent = String(e);
  }
}

function resample() {
  signal = JSON.parse(demoSignal(200, 5, 0.3, seed++));
  runDenoise();
}

function runGraph() {
  const p = Number($("graph-p").value), trials = Number($("graph-trials").value);
  const ratios = [1.5, 2, 3, 5, 8, 12];
  try {
    const rows = JSON.parse(graphKappa(p, Float64Array.from(ratios), trials, 7));
    drawLines($("graph-canvas"), [
      { label: "mean kappa", points: rows.map((r) => [r.ratio, r.mean_kappa]) },
      { label: "max kappa", points: rows.map((r) => [r.ratio, r.max_kappa]) },
    ], { logY: true, xLabel: "m / p", yLabel: "kappa(D)" });
    $("graph-status").textContent = `${rows.length} ratios, ${trials} graphs each`;
  } catch (e) {
    $("graph-status").textContent = String(e);
  }
}

function runSweep() {
  const n = Number($("sweep-n").value), p = Number($("sweep-p").value), trials = Number($("sweep-trials").value);
  const kappas = [1, 3.16, 10, 31.6, 100];
  $("sweep-status").textContent = "running...";
  setTimeout(() => {
    try {
      const t0 = performance.now();
      const rows = JSON.parse(conditionSweep(n, p, Float64Array.from(kappas), trials, 0));
      drawLines($("sweep-canvas"), [
        { label: `n=${n}, p=${p}`, points: rows.map((r) => [r.kappa, r.mean_rel_error]) },
      ], { logX: true, xLabel: "kappa(D)", yLabel: "mean relative error" });
      $("sweep-status").textContent = `${(performance.now() - t0).toFixed(0)} ms`;
    } catch (e) {
      $("sweep-status").textContent = String(e);
    }
  }, 10);
}

await init();
$("lambda").addEventListener("input", runDenoise);
$("fused").addEventListener("change", runDenoise);
$("resample").addEventListener("click", resample);
$("graph-run").addEventListener("click", runGraph);
$("sweep-run").addEventListener("click", runSweep);
resample();
runGraph();
