// Build with:
//   cargo build -p bcwave-web --release --target wasm32-unknown-unknown
//   wasm-bindgen --target web --out-dir crates/web/www/pkg target/wasm32-unknown-unknown/release/bcwave_web.wasm
import init, { waveSnapshot, certifySquare, fourierSamples } from "./pkg/bcwave_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function fail(el, e) {
  el.textContent = String(e.message ?? e);
  el.className = "err";
}

function draw(values, n) {
  const canvas = $("w-canvas");
  const side = n + 1;
  canvas.width = side;
  canvas.height = side;
  const ctx = canvas.getContext("2d");
  const img = ctx.createImageData(side, side);
  const peak = values.reduce((m, v) => Math.max(m, Math.abs(v)), 1e-12);
  // node (i0, i1) has index i0 * side + i1; draw x to the right and y upwards
  for (let i0 = 0; i0 < side; i0++) {
    for (let i1 = 0; i1 < side; i1++) {
      const v = values[i0 * side + i1] / peak;
      const p = 4 * ((side - 1 - i1) * side + i0);
      img.data[p] = v > 0 ? 255 : Math.round(255 * (1 + v));
      img.data[p + 1] = Math.round(255 * (1 - Math.abs(v)));
      img.data[p + 2] = v < 0 ? 255 : Math.round(255 * (1 - v));
      img.data[p + 3] = 255;
    }
  }
  ctx.putImageData(img, 0, 0);
  return peak;
}

function solve() {
  const msg = $("w-msg");
  msg.className = "";
  try {
    const n = num("w-n");
    const t0 = performance.now();
    const u = waveSnapshot(n, num("w-amp"), num("w-t"));
    const peak = draw(u, n);
    msg.textContent = `max |u| = ${peak.toFixed(4)}, ${(performance.now() - t0).toFixed(0)} ms`;
  } catch (e) {
    fail(msg, e);
  }
}

function reconstruct() {
  const msg = $("f-msg");
  msg.className = "";
  msg.textContent = "working…";
  setTimeout(() => {
    try {
      const t0 = performance.now();
      const rows = JSON.parse(fourierSamples(num("f-n"), num("f-amp")));
      const fmt = (x) => x.toFixed(4);
      $("f-table").innerHTML =
        "<tr><th>ξ / π</th><th>from boundary data</th><th>quadrature</th></tr>" +
        rows
          .map((r) => `<tr><td>(${r.xi.map((x) => (x / Math.PI).toFixed(0)).join(", ")})</td>` +
            `<td>${fmt(r.re)} ${r.im < 0 ? "−" : "+"} ${fmt(Math.abs(r.im))}i</td>` +
            `<td>${fmt(r.exact_re)} ${r.exact_im < 0 ? "−" : "+"} ${fmt(Math.abs(r.exact_im))}i</td></tr>`)
          .join("");
      msg.textContent = `${rows.length} samples in ${(performance.now() - t0).toFixed(0)} ms`;
    } catch (e) {
      fail(msg, e);
    }
  }, 10);
}

function certify() {
  const out = $("c-out");
  out.className = "";
  try {
    const c = JSON.parse(certifySquare(num("c-lo"), num("c-hi"), num("c-n")));
    out.textContent = [
      `ρ     = ${c.rho.toFixed(4)}`,
      `r     = ${c.r.toFixed(4)}`,
      `τ     = ${c.tau.toFixed(4)}`,
      `C_F   = ${c.c_f.toExponential(4)}`,
      `T_min = ${c.t_min.toExponential(4)}`,
      `Γ     = ${c.gamma_nodes} of ${c.trace_nodes} boundary nodes`,
    ].join("\n");
  } catch (e) {
    fail(out, e);
  }
}

await init();
$("status").textContent = "Ready.";
$("w-t").addEventListener("input", () => { $("w-tv").textContent = $("w-t").value; solve(); });
$("w-go").addEventListener("click", solve);
$("f-go").addEventListener("click", reconstruct);
$("c-go").addEventListener("click", certify);
solve();
