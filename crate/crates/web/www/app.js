import init, { shippedScenarios, runScenario, filterAtState, plotCsv } from "./pkg/mcbf_web.js";

const $ = (id) => document.getElementById(id);

function showError(el, err) {
  el.innerHTML = "";
  const p = document.createElement("p");
  p.className = "error";
  p.textContent = String(err);
  el.appendChild(p);
}

let lastCsv = null;

function setupRun() {
  const scenarios = JSON.parse(shippedScenarios());
  const pick = $("scenario-pick");
  for (const name of Object.keys(scenarios)) {
    const opt = document.createElement("option");
    opt.textContent = name;
    pick.appendChild(opt);
  }
  const load = () => { $("scenario-text").value = scenarios[pick.value]; };
  pick.addEventListener("change", load);
  load();

  $("run-btn").addEventListener("click", () => {
    $("run-metrics").textContent = "running...";
    setTimeout(() => {
      try {
        const t0 = performance.now();
        const out = JSON.parse(runScenario($("scenario-text").value));
        const m = out.metrics;
        $("run-metrics").textContent =
          `termination ${m.termination.kind}, ${m.steps} steps in ${((performance.now() - t0) / 1000).toFixed(2)} s\n` +
          `collision ${m.collision}, audit ${out.audit_passed ? "passed" : "failed"}\n` +
          `min h tractor ${m.min_h_tractor.toFixed(3)}, trailer ${m.min_h_trailer.toFixed(3)}, ` +
          `footprint clearance ${m.min_footprint_clearance.toFixed(3)} m\n` +
          `filter active on ${m.filter_activation_count} steps, RMS tracking error ${m.rms_tracking_error.toFixed(3)} m`;
        $("run-path").innerHTML = out.path_svg;
        $("run-barriers").innerHTML = out.barriers_svg;
        lastCsv = out.csv;
        $("download-btn").disabled = false;
      } catch (e) {
        showError($("run-metrics"), e);
      }
    }, 10);
  });

  $("download-btn").addEventListener("click", () => {
    const url = URL.createObjectURL(new Blob([lastCsv], { type: "text/csv" }));
    const a = document.createElement("a");
    a.href = url;
    a.download = "trajectory.csv";
    a.click();
    URL.revokeObjectURL(url);
  });
}

function setupFilter() {
  const num = (id) => parseFloat($(id).value);
  const update = () => {
    const req = {
      state: { x1: 0, y1: 0, v: num("f-v"), a: 0, theta: 0, psi: 0, delta1: num("f-d1"), delta2: 0 },
      u_nom: { jerk: num("f-j"), omega1: num("f-w1"), omega2: num("f-w2") },
      obstacles: [{ x: num("f-ox"), y: num("f-oy"), radius: 1.0 }],
      input_boxes: $("f-boxes").checked,
      slack: $("f-slack").checked,
    };
    const out = $("filter-out");
    try {
      const r = JSON.parse(filterAtState(JSON.stringify(req)));
      const f = (x) => x.toFixed(4);
      let html = `<p>filter ${r.active ? "<b>active</b>" : "inactive"}: ` +
        `u_safe = (${f(r.u_safe.jerk)}, ${f(r.u_safe.omega1)}, ${f(r.u_safe.omega2)})</p>` +
        "<table><tr><th>barrier</th><th>cascade levels</th><th>margin</th></tr>";
      r.barriers.forEach((b, i) => {
        html += `<tr><td>${b.body}</td><td>${b.cascade.map(f).join(", ")}</td><td>${f(r.margins[i])}</td></tr>`;
      });
      out.innerHTML = html + "</table>";
    } catch (e) {
      showError(out, e);
    }
  };
  for (const el of document.querySelectorAll("#f-v, #f-d1, #f-ox, #f-oy, #f-j, #f-w1, #f-w2, #f-boxes, #f-slack")) {
    el.addEventListener("input", update);
  }
  update();
}

function setupPlot() {
  let text = null;
  const draw = () => {
    if (text === null) return;
    try {
      $("csv-plot").innerHTML = plotCsv(text, $("plot-kind").value);
    } catch (e) {
      showError($("csv-plot"), e);
    }
  };
  $("csv-file").addEventListener("change", async (ev) => {
    const file = ev.target.files[0];
    if (!file) return;
    text = await file.text();
    draw();
  });
  $("plot-kind").addEventListener("change", draw);
}

await init();
$("status").textContent = "Ready.";
setupRun();
setupFilter();
setupPlot();
