import init, { Demo } from "./pkg/dictstereo_web.js";

const ATOMS = ["Lambertian", "Ward 0.08", "Ward 0.2", "Ward 0.45"];
const $ = (id) => document.getElementById(id);
const value = (id) => parseFloat($(id).value);

function paint(canvas, rgba) {
  const ctx = canvas.getContext("2d");
  ctx.putImageData(new ImageData(new Uint8ClampedArray(rgba), canvas.width, canvas.height), 0, 0);
}

function toPixel(canvas, x, y) {
  const half = canvas.width / 2;
  return [half + x * half, half - y * half];
}

function weights() {
  return Float64Array.from(ATOMS.map((_, i) => value(`w${i}`)));
}

function relight(demo) {
  const c = $("sphere");
  paint(c, demo.relight(c.width, weights(), value("light-polar"), value("light-azimuth"), value("exposure")));
}

function search(demo) {
  const c = $("landscape");
  const args = [weights(), value("normal-polar"), value("normal-azimuth"), value("noise"), 1n];
  paint(c, demo.landscape(c.width, ...args));
  const t = demo.trace(...args);
  const ctx = c.getContext("2d");
  const p = value("normal-polar") * Math.PI / 180;
  const a = value("normal-azimuth") * Math.PI / 180;
  const [tx, ty] = toPixel(c, Math.sin(p) * Math.cos(a), Math.sin(p) * Math.sin(a));
  ctx.strokeStyle = "white";
  ctx.strokeRect(tx - 2, ty - 2, 4, 4);
  ctx.strokeStyle = "red";
  ctx.beginPath();
  const lines = [];
  for (let k = 3; k < t.length; k += 3) {
    const [x, y] = toPixel(c, t[k], t[k + 1]);
    if (k === 3) ctx.moveTo(x, y); else ctx.lineTo(x, y);
    lines.push(`level ${(k - 3) / 3}: (${t[k].toFixed(3)}, ${t[k + 1].toFixed(3)}, ${t[k + 2].toFixed(3)})`);
  }
  ctx.stroke();
  lines.push(`error ${t[0].toFixed(2)} deg, scored ${t[1]} of ${t[2]} finest candidates`);
  $("trace").textContent = lines.join("\n");
}

async function main() {
  await init();
  const box = $("weights");
  ATOMS.forEach((name, i) => {
    box.insertAdjacentHTML("beforeend",
      `<label>${name} <input id="w${i}" type="range" min="0" max="1" step="0.05" value="${i === 0 ? 0.6 : i === 2 ? 0.4 : 0}"></label>`);
  });
  const demo = new Demo(60);
  $("status").textContent = "";
  const update = () => {
    try {
      relight(demo);
      search(demo);
    } catch (e) {
      $("status").textContent = String(e);
    }
  };
  document.querySelectorAll("input").forEach((el) => el.addEventListener("change", update));
  ["light-polar", "light-azimuth", "exposure"].forEach((id) => $(id).addEventListener("input", () => relight(demo)));
  update();
}

main().catch((e) => { $("status").textContent = String(e); });
