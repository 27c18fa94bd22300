import init, { schedule, semigroup, census } from "./pkg/mcm_demo.js";

const num = (id) => Number(document.getElementById(id).value);

function show(id, text, render) {
  const out = document.getElementById(id);
  const v = JSON.parse(text);
  out.classList.toggle("fail", Boolean(v.error));
  out.textContent = v.error ? v.error : render(v);
}

function renderSchedule(v) {
  const lines = v.mu.map((row, i) => {
    const l = v.first_level + i;
    return `delta_${l} = ${v.delta[i]}   mu_${l} = (${row.join(", ")})`;
  });
  lines.push(`d = ${v.d}`);
  for (const c of v.inequalities) lines.push(`${c.pass ? "ok  " : "FAIL"} ${c.name}`);
  lines.push(`twists: ${v.twists.length} values, all negative: ${v.all_negative}`);
  return lines.join("\n");
}

function renderSplit(v) {
  const split = v.split ? `${v.d} = ${v.split.p}*${v.s} + ${v.split.q}*${v.s + 1}` : `${v.d} has no split`;
  return `${split}\nnot representable: ${v.unrepresentable.join(", ") || "none"}\nevery d >= ${v.threshold} splits: ${v.pass}`;
}

function renderCensus(v) {
  return [
    `ambient dimension ${v.ambient_dim}, ${v.examined} matrices`,
    `members ${v.count}, implied codimension ${v.implied_codim.toFixed(3)}`,
    `bound ${v.bound}: ${v.verdict ? "within" : "EXCEEDED"}`,
  ].join("\n");
}

await init();
document.getElementById("s-go").onclick = () => show("s-out", schedule(num("s-n"), num("s-c"), num("s-r"), BigInt(num("s-h"))), renderSchedule);
document.getElementById("g-go").onclick = () => show("g-out", semigroup(BigInt(num("g-d")), BigInt(num("g-s")), BigInt(num("g-h"))), renderSplit);
document.getElementById("c-go").onclick = () => show("c-out", census(num("c-a"), num("c-b"), BigInt(num("c-q"))), renderCensus);
