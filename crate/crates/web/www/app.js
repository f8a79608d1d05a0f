import init, { fuseSample, confidenceCurves, runBenchmark } from "./pkg/zsfuse_web.js";

const COLORS = { text_image_clip: "#1f77b4", image_image_clip: "#ff7f0e", image_image_dino: "#2ca02c", fused: "#222" };
const LABELS = { text_image_clip: "M1", image_image_clip: "M2", image_image_dino: "M3", fused: "fused" };
const SCHEME_COLORS = { max: "#1f77b4", inv_entropy: "#d62728", neg_exp_entropy: "#9467bd" };
const SVG = "http://www.w3.org/2000/svg";

const $ = (id) => document.getElementById(id);

function svgEl(tag, attrs, text) {
  const el = document.createElementNS(SVG, tag);
  for (const [k, v] of Object.entries(attrs)) el.setAttribute(k, v);
  if (text !== undefined) el.textContent = text;
  return el;
}

function parseRow(s) {
  return s.split(",").map((x) => x.trim()).filter((x) => x !== "").map(Number);
}

function fmt(x, digits = 4) {
  return Number.isFinite(x) ? x.toFixed(digits) : "-";
}

function fillTable(table, head, rows, boldLast) {
  table.replaceChildren();
  const tr = table.insertRow();
  for (const h of head) {
    const th = document.createElement("th");
    th.textContent = h;
    tr.appendChild(th);
  }
  rows.forEach((cells, i) => {
    const r = table.insertRow();
    if (boldLast && i === rows.length - 1) r.className = "fused";
    for (const c of cells) r.insertCell().textContent = c;
  });
}

function tau() {
  return Math.pow(10, Number($("tau").value));
}

function updateFuse() {
  $("tau-out").textContent = tau().toPrecision(3);
  const err = $("fuse-error");
  err.textContent = "";
  let out;
  try {
    const scores = [$("s1"), $("s2"), $("s3")].map((el) => parseRow(el.value));
    out = JSON.parse(fuseSample(JSON.stringify(scores), tau(), $("scheme").value));
  } catch (e) {
    err.textContent = e.message ?? String(e);
    return;
  }
  const n = out.fused.length;
  const names = $("names").value.split(",").map((s) => s.trim());
  const series = out.methods.map((m) => ({ key: m.method, probs: m.probs }));
  series.push({ key: "fused", probs: out.fused });

  const svg = $("fuse-chart");
  svg.replaceChildren();
  const [w, h, pad, base] = [720, 300, 30, 260];
  const groupW = (w - 2 * pad) / n;
  const barW = groupW / (series.length + 1);
  for (let c = 0; c < n; c++) {
    const x0 = pad + c * groupW;
    series.forEach((s, j) => {
      const bh = s.probs[c] * (base - 20);
      svg.appendChild(svgEl("rect", {
        x: x0 + (j + 0.5) * barW, y: base - bh, width: barW * 0.9, height: bh, fill: COLORS[s.key],
      }));
    });
    const label = (names[c] || `class ${c}`) + (c === out.predicted ? " *" : "");
    svg.appendChild(svgEl("text", { x: x0 + groupW / 2, y: base + 18, "text-anchor": "middle", "font-size": 13 }, label));
  }
  svg.appendChild(svgEl("line", { x1: pad, x2: w - pad, y1: base, y2: base, stroke: "#888" }));
  series.forEach((s, j) => {
    svg.appendChild(svgEl("rect", { x: pad + j * 90, y: 4, width: 10, height: 10, fill: COLORS[s.key] }));
    svg.appendChild(svgEl("text", { x: pad + j * 90 + 14, y: 13, "font-size": 12 }, LABELS[s.key]));
  });

  const rows = out.methods.map((m) => [LABELS[m.method], fmt(m.entropy), m.confidence === null ? "fixed" : fmt(m.confidence), fmt(m.weight)]);
  fillTable($("fuse-table"), ["method", "entropy", "confidence", "weight"], rows, false);
}

function drawCurves() {
  const canvas = $("curve-canvas");
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  let c;
  try {
    c = JSON.parse(confidenceCurves(Number($("curve-n").value), 200));
  } catch (e) {
    ctx.fillText(e.message ?? String(e), 20, 20);
    return;
  }
  const [pad, w, h] = [50, canvas.width, canvas.height];
  const all = Object.values(c.confidence).flat().filter((v) => v > 0);
  const lo = Math.floor(Math.log10(Math.min(...all)));
  const hi = Math.ceil(Math.log10(Math.max(...all)));
  const px = (p) => pad + ((p - c.p_max[0]) / (1 - c.p_max[0])) * (w - 2 * pad);
  const py = (v) => h - pad - ((Math.log10(v) - lo) / (hi - lo)) * (h - 2 * pad);

  ctx.strokeStyle = "#ccc";
  ctx.fillStyle = "#444";
  ctx.font = "12px sans-serif";
  for (let e = lo; e <= hi; e++) {
    ctx.beginPath();
    ctx.moveTo(pad, py(10 ** e));
    ctx.lineTo(w - pad, py(10 ** e));
    ctx.stroke();
    ctx.fillText(`1e${e}`, 8, py(10 ** e) + 4);
  }
  ctx.fillText(`p = ${fmt(c.p_max[0], 3)}`, pad, h - pad + 18);
  ctx.fillText("p = 1", w - pad - 30, h - pad + 18);

  const legend = $("curve-legend");
  legend.replaceChildren();
  for (const [scheme, values] of Object.entries(c.confidence)) {
    ctx.strokeStyle = SCHEME_COLORS[scheme];
    ctx.lineWidth = 2;
    ctx.beginPath();
    values.forEach((v, i) => {
      const [x, y] = [px(c.p_max[i]), py(Math.max(v, 10 ** lo))];
      i === 0 ? ctx.moveTo(x, y) : ctx.lineTo(x, y);
    });
    ctx.stroke();
    const item = document.createElement("span");
    item.innerHTML = `<i style="background:${SCHEME_COLORS[scheme]}"></i>${scheme}`;
    legend.appendChild(item);
  }
  ctx.lineWidth = 1;
}

function runBench() {
  const err = $("bench-error");
  err.textContent = "";
  const num = (id) => Number($(id).value);
  const params = {
    classes: num("b-classes"),
    samples_per_class: num("b-spc"),
    dim: num("b-dim"),
    noise: [num("b-n1"), num("b-n2"), num("b-n3")],
    refs: num("b-refs"),
    ref_noise_ratio: num("b-ratio"),
    scheme: $("b-scheme").value,
    temperature: num("b-tau"),
    seeds: num("b-seeds"),
  };
  let out;
  try {
    out = JSON.parse(runBenchmark(JSON.stringify(params)));
  } catch (e) {
    err.textContent = e.message ?? String(e);
    return;
  }
  const rows = out.rows.map((r) => [LABELS[r.method], fmt(r.top1), fmt(r.top3), fmt(r.top5), fmt(r.auroc)]);
  fillTable($("bench-table"), ["method", "top-1", "top-3", "top-5", "AUROC"], rows, true);

  const svg = $("bench-chart");
  svg.replaceChildren();
  const metrics = [["top1", "top-1"], ["auroc", "AUROC"]];
  const [pad, base, groupW] = [30, 210, 330];
  metrics.forEach(([key, title], g) => {
    const x0 = pad + g * groupW;
    svg.appendChild(svgEl("text", { x: x0 + groupW / 2 - 20, y: 230, "font-size": 13 }, title));
    out.rows.forEach((r, j) => {
      const bh = r[key] * 180;
      const x = x0 + j * 70;
      svg.appendChild(svgEl("rect", { x, y: base - bh, width: 55, height: bh, fill: COLORS[r.method] }));
      svg.appendChild(svgEl("text", { x: x + 4, y: base - bh - 4, "font-size": 11 }, `${LABELS[r.method]} ${fmt(r[key], 3)}`));
    });
  });
}

async function main() {
  await init();
  $("status").textContent = "";
  for (const id of ["s1", "s2", "s3", "names", "tau", "scheme"]) $(id).addEventListener("input", updateFuse);
  $("curve-n").addEventListener("input", drawCurves);
  $("b-run").addEventListener("click", runBench);
  updateFuse();
  drawCurves();
  runBench();
}

main().catch((e) => {
  $("status").textContent = `Failed to load: ${e.message ?? e}`;
});
