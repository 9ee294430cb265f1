import init, { gg_path, gd_path, step_sizes, one_step_residuals } from "./pkg/gradgroup_demo.js";

const EPSILON = 1e-4;
const EXTENT = 3;
const COLORS = ["#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];

const plane = document.getElementById("plane");
const ctx = plane.getContext("2d");
const curve = document.getElementById("curve");
const cctx = curve.getContext("2d");
const errorBox = document.getElementById("error");

let points = [[-2.2, 1.6], [1.8, 2.1]];
let gdStart = [-2.5, -1.5];

const control = (id, fmt) => {
  const el = document.getElementById(id);
  const out = document.getElementById(id + "-v");
  return { el, get value() { return Number(el.value); }, show(v) { out.textContent = fmt(v); } };
};
const rhoCtl = control("rho", (v) => v.toFixed(2));
const alphaCtl = control("alpha", (v) => v.toFixed(2));
const stepsCtl = control("steps", (v) => String(v));
const lrCtl = control("lr", (v) => v.toFixed(3));

// slider is log10 ρ, 1 to 100
const rho = () => Math.pow(10, rhoCtl.value);

const toScreen = ([x, y]) => [
  ((x + EXTENT) / (2 * EXTENT)) * plane.width,
  ((EXTENT - y) / (2 * EXTENT)) * plane.height,
];
const fromScreen = (px, py) => [
  (px / plane.width) * 2 * EXTENT - EXTENT,
  EXTENT - (py / plane.height) * 2 * EXTENT,
];

function drawContours(r) {
  ctx.clearRect(0, 0, plane.width, plane.height);
  ctx.strokeStyle = "#e3e3e3";
  ctx.lineWidth = 1;
  for (let level = 0.25; level < 0.5 * EXTENT * EXTENT * r; level *= 1.8) {
    // ellipse x²/(2L) + y²/(2L/ρ) = 1
    const a = Math.sqrt(2 * level);
    const b = Math.sqrt((2 * level) / r);
    const [cx, cy] = toScreen([0, 0]);
    ctx.beginPath();
    ctx.ellipse(cx, cy, (a / (2 * EXTENT)) * plane.width, (b / (2 * EXTENT)) * plane.height, 0, 0, 2 * Math.PI);
    ctx.stroke();
  }
  ctx.fillStyle = "#000";
  const [ox, oy] = toScreen([0, 0]);
  ctx.fillRect(ox - 2, oy - 2, 4, 4);
}

function drawPath(flat, stride, offset, color, dashed) {
  ctx.strokeStyle = color;
  ctx.fillStyle = color;
  ctx.lineWidth = 1.5;
  ctx.setLineDash(dashed ? [4, 3] : []);
  ctx.beginPath();
  for (let k = 0; k * stride + offset + 1 < flat.length; k++) {
    const [sx, sy] = toScreen([flat[k * stride + offset], flat[k * stride + offset + 1]]);
    if (k === 0) ctx.moveTo(sx, sy); else ctx.lineTo(sx, sy);
  }
  ctx.stroke();
  ctx.setLineDash([]);
  for (let k = 0; k * stride + offset + 1 < flat.length; k++) {
    const [sx, sy] = toScreen([flat[k * stride + offset], flat[k * stride + offset + 1]]);
    ctx.beginPath();
    ctx.arc(sx, sy, k === 0 ? 5 : 2.2, 0, 2 * Math.PI);
    ctx.fill();
  }
}

function drawCurve(start) {
  const w = curve.width, h = curve.height, pad = 36;
  cctx.clearRect(0, 0, w, h);
  cctx.font = "11px system-ui";
  cctx.fillStyle = "#444";
  if (points.length < 2) {
    cctx.fillText("place at least two points", pad, h / 2);
    return;
  }
  const rhos = Array.from({ length: 61 }, (_, i) => Math.pow(10, (i / 60) * 2));
  const res = one_step_residuals(new Float64Array(rhos), start);
  const logY = (v) => Math.log10(Math.max(v, 1e-16));
  const yMin = -16, yMax = 0.5;
  const X = (r) => pad + (Math.log10(r) / 2) * (w - pad - 10);
  const Y = (v) => 10 + ((yMax - logY(v)) / (yMax - yMin)) * (h - pad - 10);
  cctx.strokeStyle = "#bbb";
  cctx.strokeRect(pad, 10, w - pad - 10, h - pad - 10);
  for (const e of [0, -4, -8, -12, -16]) {
    cctx.fillText(`1e${e}`, 2, Y(Math.pow(10, e)) + 4);
  }
  for (const r of [1, 10, 100]) cctx.fillText(`ρ=${r}`, X(r) - 10, h - 12);
  cctx.strokeStyle = "#1f77b4";
  cctx.lineWidth = 1.5;
  cctx.beginPath();
  res.forEach((v, i) => (i === 0 ? cctx.moveTo(X(rhos[i]), Y(v)) : cctx.lineTo(X(rhos[i]), Y(v))));
  cctx.stroke();
  const here = rho();
  cctx.strokeStyle = "#d62728";
  cctx.beginPath();
  cctx.moveTo(X(here), 10);
  cctx.lineTo(X(here), h - pad);
  cctx.stroke();
}

function renderTable(eta) {
  const body = document.querySelector("#eta tbody");
  body.innerHTML = "";
  points.forEach((p, i) => {
    const tr = document.createElement("tr");
    const cells = [String(i), p[0].toFixed(2), p[1].toFixed(2), eta ? eta[i].toFixed(4) : "–"];
    tr.innerHTML = cells.map((c) => `<td style="color:${COLORS[i % COLORS.length]}">${c}</td>`).join("");
    body.appendChild(tr);
  });
}

function render() {
  const r = rho();
  rhoCtl.show(r);
  alphaCtl.show(alphaCtl.value);
  stepsCtl.show(stepsCtl.value);
  lrCtl.show(lrCtl.value);
  errorBox.textContent = "";
  drawContours(r);

  const gd = gd_path(r, gdStart[0], gdStart[1], lrCtl.value, stepsCtl.value);
  drawPath(gd, 2, 0, "#777", true);

  const start = new Float64Array(points.flat());
  let eta = null;
  if (points.length >= 2) {
    try {
      const path = gg_path(r, start, stepsCtl.value, alphaCtl.value, EPSILON);
      const stride = 2 * points.length;
      points.forEach((_, i) => drawPath(path, stride, 2 * i, COLORS[i % COLORS.length], false));
      eta = step_sizes(r, start, EPSILON);
    } catch (e) {
      errorBox.textContent = String(e);
    }
  } else {
    points.forEach((p, i) => drawPath(new Float64Array(p), 2, 0, COLORS[i % COLORS.length], false));
  }
  renderTable(eta);
  drawCurve(start);
}

plane.addEventListener("click", (ev) => {
  const rect = plane.getBoundingClientRect();
  const p = fromScreen(ev.clientX - rect.left, ev.clientY - rect.top);
  if (ev.shiftKey) gdStart = p;
  else if (points.length < COLORS.length) points.push(p);
  render();
});
plane.addEventListener("contextmenu", (ev) => {
  ev.preventDefault();
  points = [];
  render();
});
for (const c of [rhoCtl, alphaCtl, stepsCtl, lrCtl]) c.el.addEventListener("input", render);

await init();
render();
