import init, { templates, sample_table, fit_table, explore } from "./pkg/symreg_web.js";

const $ = (id) => document.getElementById(id);

function show(el, obj) {
  el.classList.toggle("err", "error" in obj);
  el.textContent = "error" in obj ? obj.error : JSON.stringify(obj, null, 1);
}

function fmt(v) {
  return Math.abs(v) >= 1e4 || (v !== 0 && Math.abs(v) < 1e-3) ? v.toExponential(4) : v.toFixed(4);
}

// Scatter of y against x1 with the fitted values overlaid.
function plot(res) {
  const c = $("plot"), g = c.getContext("2d");
  g.clearRect(0, 0, c.width, c.height);
  if (!res.table) return;
  const xs = res.table.x[0], ys = res.table.y;
  const fy = res.fitted.filter((v) => v !== null);
  const all = ys.concat(fy);
  const [x0, x1] = [Math.min(...xs), Math.max(...xs)];
  const [y0, y1] = [Math.min(...all), Math.max(...all)];
  const pad = 20;
  const sx = (x) => pad + ((x - x0) / (x1 - x0 || 1)) * (c.width - 2 * pad);
  const sy = (y) => c.height - pad - ((y - y0) / (y1 - y0 || 1)) * (c.height - 2 * pad);
  g.fillStyle = "#357";
  xs.forEach((x, i) => g.fillRect(sx(x) - 2, sy(ys[i]) - 2, 4, 4));
  g.strokeStyle = "#c33";
  g.lineWidth = 1.5;
  const order = xs.map((x, i) => i).filter((i) => res.fitted[i] !== null).sort((a, b) => xs[a] - xs[b]);
  g.beginPath();
  order.forEach((i, k) => (k ? g.lineTo : g.moveTo).call(g, sx(xs[i]), sy(res.fitted[i])));
  g.stroke();
  g.fillStyle = "#666";
  g.fillText(res.table.d > 1 ? "y against x1 (other columns hidden)" : "y against x1", pad, 12);
}

function runSample() {
  const res = JSON.parse(sample_table($("tpl").value, Number($("noise").value),
    Number($("rows").value), BigInt($("seed").value)));
  if ("error" in res) return show($("sample-out"), res);
  $("sample-out").classList.remove("err");
  $("sample-out").textContent =
    `${res.equation}\nparams: ${res.params.map(fmt).join(", ")}\n\n${res.table.csv}`;
  $("eq").value = res.equation;
  $("csv").value = res.table.csv;
}

function runFit() {
  const res = JSON.parse(fit_table($("eq").value, $("csv").value));
  plot(res);
  if ("error" in res) return show($("fit-out"), res);
  $("fit-out").classList.remove("err");
  $("fit-out").textContent = [
    res.equation,
    ...res.params.map((p, i) => `w${i + 1} = ${fmt(p)}`),
    `sse = ${fmt(res.sse)}   rmse = ${fmt(res.rmse)}   converged = ${res.converged}`,
  ].join("\n");
}

function runExplore() {
  const text = $("tokens").value;
  const res = JSON.parse(explore(text));
  const out = $("explore-out");
  out.innerHTML = "";
  if ("error" in res) return show(out, res);
  if (!res.ok) {
    const words = text.trim().split(/\s+/).concat(["EOS"]);
    words.forEach((w, i) => {
      const s = document.createElement("span");
      s.className = "tok" + (i + 1 === res.position ? " bad" : "");
      s.textContent = w;
      out.append(s);
    });
    const p = document.createElement("pre");
    p.className = "err";
    p.textContent = res.message;
    return out.append(p);
  }
  res.tokens.forEach((t, i) => {
    const s = document.createElement("span");
    s.className = "tok";
    s.title = `index ${res.indices[i]} of ${res.vocab.length}`;
    s.textContent = t;
    out.append(s);
  });
  const p = document.createElement("pre");
  p.textContent = `${res.canonical}\nvars ${res.vars}, params ${res.params}, depth ${res.depth}, ` +
    `${res.tokens.length} of ${res.seq_len} slots, ${res.seq_len * res.vocab.length} output bits`;
  out.append(p);
}

await init();
for (const t of JSON.parse(templates())) {
  const o = document.createElement("option");
  o.value = t.id;
  o.textContent = `${t.id}: ${t.equation}`;
  $("tpl").append(o);
}
$("sample").onclick = runSample;
$("fit").onclick = runFit;
$("tokens").oninput = runExplore;
runExplore();
