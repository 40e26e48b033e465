import init, { hashUrl, exploreSession } from "./pkg/browselog_demo.js";

const $ = (id) => document.getElementById(id);
const SVG = "http://www.w3.org/2000/svg";

function el(name, attrs, parent) {
  const e = document.createElementNS(SVG, name);
  for (const [k, v] of Object.entries(attrs)) e.setAttribute(k, v);
  parent.appendChild(e);
  return e;
}

function table(rows, cols) {
  const head = "<tr>" + cols.map((c) => `<th>${c}</th>`).join("") + "</tr>";
  const body = rows.map((r) => "<tr>" + cols.map((c) => `<td>${r[c]}</td>`).join("") + "</tr>").join("");
  return `<table>${head}${body}</table>`;
}

function showHash() {
  try {
    const rows = JSON.parse(hashUrl($("url").value));
    $("hash-out").innerHTML = table(rows, ["level", "sha1", "value"]);
  } catch (e) {
    $("hash-out").innerHTML = `<p class="error">${e.message ?? e}</p>`;
  }
}

function drawTimeline(v) {
  const svg = $("timeline");
  svg.innerHTML = "";
  const width = svg.clientWidth || 1000;
  const duration = Math.max(v.totals.duration_ms, 1);
  const x = (t) => 60 + (t / duration) * (width - 70);
  const rows = [];
  for (const w of v.windows) {
    const tabs = [...new Set(v.loads.filter((l) => l.window_id === w.window_id).map((l) => l.tab_id))].sort((a, b) => a - b);
    rows.push({ kind: "window", w });
    for (const tab of tabs) rows.push({ kind: "tab", w, tab });
  }
  rows.push({ kind: "activity" });
  const rowH = 14;
  svg.setAttribute("height", rows.length * rowH + 20);
  const bar = (span, y, h, fill) => el("rect", { x: x(span[0]), y, width: Math.max(x(span[1]) - x(span[0]), 1), height: h, fill }, svg);
  rows.forEach((r, i) => {
    const y = 10 + i * rowH;
    const label = r.kind === "window" ? `win ${r.w.window_id}` : r.kind === "tab" ? `  tab ${r.tab}` : "user";
    el("text", { x: 2, y: y + 10, "font-size": 10 }, svg).textContent = label;
    if (r.kind === "window") {
      bar(r.w.span, y + 4, 4, "#ccc");
      r.w.background.forEach((s) => bar(s, y + 2, 8, "#e94"));
      r.w.minimized.forEach((s) => bar(s, y + 2, 8, "#c4c"));
    } else if (r.kind === "tab") {
      v.loads.filter((l) => l.window_id === r.w.window_id && l.tab_id === r.tab).forEach((l) => bar(l.span, y + 1, 11, "#9ab"));
      v.visible.filter((s) => s.window_id === r.w.window_id && s.tab_id === r.tab).forEach((s) => bar(s.span, y + 4, 5, "#2a7"));
    } else {
      v.implicit_idle.forEach((s) => bar(s, y + 1, 11, "#fbb"));
      v.inactive.forEach((s) => bar(s, y + 4, 5, "#d33"));
    }
  });
  const t = v.totals;
  const s = (ms) => (ms / 1000).toFixed(1) + " s";
  $("totals").innerHTML =
    table([{ duration: s(t.duration_ms), loaded: s(t.loaded_ms), display: s(t.display_ms), viewing: s(t.viewing_ms),
      background: s(t.background_ms), "implicit idle": s(t.implicit_idle_ms), inactive: s(t.explicit_inactive_ms),
      "≥2 tabs": (100 * t.tabs_2_plus).toFixed(1) + "%" }],
      ["duration", "loaded", "display", "viewing", "background", "implicit idle", "inactive", "≥2 tabs"]) +
    table(v.domains.map((d) => ({ domain: d.key.slice(0, 12), loads: d.load_count, loaded: s(d.loaded_ms), display: s(d.display_ms), viewing: s(d.viewing_ms) })),
      ["domain", "loads", "loaded", "display", "viewing"]);
}

function drawTree(v) {
  const svg = $("tree");
  svg.innerHTML = "";
  const m = v.tree.metrics;
  $("tree-metrics").innerHTML = m
    ? table([{ tabs: m.tabs_used, loads: m.page_loads, "tabs/load": m.tabs_per_load.toFixed(2), diameter: m.diameter,
        "avg path": m.avg_path_length.toFixed(2), "max outdegree": m.max_outdegree, modularity: m.modularity.toFixed(3),
        "focus changes": m.focus_changes }],
        ["tabs", "loads", "tabs/load", "diameter", "avg path", "max outdegree", "modularity", "focus changes"])
    : "<p>no page loads</p>";
  const nodes = v.tree.nodes;
  const depth = nodes.map(() => 0);
  const children = nodes.map(() => []);
  const roots = [];
  nodes.forEach((n, i) => {
    if (n.parent === null) roots.push(i);
    else { children[n.parent].push(i); depth[i] = depth[n.parent] + 1; }
  });
  // leaves get consecutive columns, parents sit over their children
  const col = nodes.map(() => 0);
  let next = 1;
  const place = (i) => {
    if (children[i].length === 0) { col[i] = next++; return; }
    children[i].forEach(place);
    col[i] = (col[children[i][0]] + col[children[i][children[i].length - 1]]) / 2;
  };
  roots.forEach(place);
  const width = svg.clientWidth || 1000;
  const maxDepth = Math.max(0, ...depth) + 1;
  svg.setAttribute("height", 40 + maxDepth * 36);
  const px = (c) => (c / next) * width;
  const py = (d) => 40 + d * 36;
  const rootX = roots.length ? (px(col[roots[0]]) + px(col[roots[roots.length - 1]])) / 2 : width / 2;
  el("circle", { cx: rootX, cy: 14, r: 5, fill: "#333" }, svg);
  const palette = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"];
  nodes.forEach((n, i) => {
    const [x0, y0] = n.parent === null ? [rootX, 14] : [px(col[n.parent]), py(depth[n.parent])];
    el("line", { x1: x0, y1: y0, x2: px(col[i]), y2: py(depth[i]), stroke: n.edge === "new-tab" ? "#e94" : "#999",
      "stroke-dasharray": n.edge === "new-tab" ? "4 2" : "" }, svg);
  });
  nodes.forEach((n, i) => {
    const c = el("circle", { cx: px(col[i]), cy: py(depth[i]), r: 6, fill: palette[n.community % palette.length] }, svg);
    el("title", {}, c).textContent = `load ${n.load_id} (${n.edge}) domain ${n.domain}`;
  });
}

function explore() {
  $("debounce-v").textContent = $("debounce").value;
  $("idle-v").textContent = $("idle").value;
  try {
    const v = JSON.parse(exploreSession(Number($("seed").value), Number($("debounce").value), Number($("idle").value)));
    drawTimeline(v);
    drawTree(v);
  } catch (e) {
    $("totals").innerHTML = `<p class="error">${e.message ?? e}</p>`;
  }
}

await init();
$("hash").addEventListener("click", showHash);
$("url").addEventListener("keydown", (e) => e.key === "Enter" && showHash());
for (const id of ["seed", "debounce", "idle"]) $(id).addEventListener("input", explore);
showHash();
explore();
