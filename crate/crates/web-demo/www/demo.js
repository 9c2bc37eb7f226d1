import init, { observer_decay, diamond_kcurve, vw_schedule } from "./pkg/parobs_web_demo.js";

const num = (id) => Number(document.getElementById(id).value);
const COLORS = ["#1f77b4", "#d62728", "#2ca02c"];

// Line plot of several series sharing x; `log` plots log10 of y.
function plot(canvas, x, series, { log = false, step = false } = {}) {
  const g = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  const pad = 40;
  g.clearRect(0, 0, w, h);
  const tf = (v) => (log ? Math.log10(Math.max(v, 1e-300)) : v);
  const ys = series.flatMap((s) => s.y.map(tf)).filter(Number.isFinite);
  const [x0, x1] = [Math.min(...x), Math.max(...x)];
  const [y0, y1] = [Math.min(...ys), Math.max(...ys)];
  const sx = (v) => pad + ((v - x0) / (x1 - x0 || 1)) * (w - 2 * pad);
  const sy = (v) => h - pad - ((tf(v) - y0) / (y1 - y0 || 1)) * (h - 2 * pad);
  g.strokeStyle = "#888";
  g.strokeRect(pad, pad, w - 2 * pad, h - 2 * pad);
  g.fillStyle = "#333";
  g.fillText((log ? "1e" : "") + y1.toPrecision(3), 2, pad);
  g.fillText((log ? "1e" : "") + y0.toPrecision(3), 2, h - pad);
  g.fillText(String(x0), pad, h - pad + 14);
  g.fillText(String(x1), w - pad - 20, h - pad + 14);
  series.forEach((s, i) => {
    g.strokeStyle = COLORS[i % COLORS.length];
    g.beginPath();
    s.y.forEach((v, j) => {
      const px = sx(x[j]), py = sy(v);
      if (j === 0) g.moveTo(px, py);
      else if (step) { g.lineTo(px, sy(s.y[j - 1])); g.lineTo(px, py); }
      else g.lineTo(px, py);
    });
    g.stroke();
    g.fillStyle = g.strokeStyle;
    g.fillText(s.name, w - pad - 120, pad + 14 * (i + 1));
  });
}

function guarded(msgId, f) {
  const msg = document.getElementById(msgId);
  try {
    msg.textContent = f() ?? "";
    msg.className = "";
  } catch (e) {
    msg.textContent = e.message ?? String(e);
    msg.className = "err";
  }
}

function runDecay() {
  guarded("d-msg", () => {
    const d = JSON.parse(observer_decay(num("d-e1"), num("d-e2"), num("d-t"), 200));
    plot(document.getElementById("d-plot"), d.t, [
      { name: "||e(t)||", y: d.error },
      { name: "envelope", y: d.envelope },
    ], { log: true });
    return `L = (${d.gain.map((v) => v.toFixed(4)).join(", ")}), gamma = ${d.gamma.toFixed(3)}, mu = ${d.mu}`;
  });
}

function runKcurve() {
  guarded("k-msg", () => {
    const k = JSON.parse(diamond_kcurve(num("k-e1"), num("k-e2"), num("k-gt"), num("k-n"), num("k-f")));
    const ell = k.k_obs.map((_, i) => i + 1);
    plot(document.getElementById("k-plot"), ell, [
      { name: "k observed", y: k.k_obs },
      { name: "k a priori", y: k.k_pred },
    ], { step: true });
    const total = k.k_obs.reduce((a, b) => a + b, 0);
    return `${ell.length} windows, ${total} iterations, final error ${k.err_end.at(-1).toExponential(2)}`;
  });
}

function runSchedule() {
  guarded("v-msg", () => {
    const s = JSON.parse(vw_schedule(num("v-e1"), num("v-e2"), num("v-dt"), num("v-gt"), num("v-m")));
    const ell = s.n_ell.map((_, i) => i + 1);
    plot(document.getElementById("v-plot"), ell, [{ name: "N_l", y: s.n_ell }], { step: true });
    const capped = s.cap_hit.filter(Boolean).length;
    return `T' = ${s.t_end.at(-1).toFixed(3)}, ${capped} windows capped, final error ${s.err_end.at(-1).toExponential(2)}`;
  });
}

await init();
document.getElementById("d-run").onclick = runDecay;
document.getElementById("k-run").onclick = runKcurve;
document.getElementById("v-run").onclick = runSchedule;
runDecay();
runKcurve();
runSchedule();
