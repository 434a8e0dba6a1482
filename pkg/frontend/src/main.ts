/** Bootstrap: tabbed screens, 2 s polling, global keyboard bindings. */

import { ApiClient } from "./api.js";
import { FinderController, LabelQueueController, PromotionsController } from "./controller.js";
import { renderFinder, renderLabelQueue, renderPromotions } from "./dom.js";

const POLL_MS = 2000;

function param(name: string, fallback: string): string {
  return new URLSearchParams(window.location.search).get(name) ?? fallback;
}

export function boot(root: HTMLElement): void {
  const base = param("server", window.location.origin);
  const runId = param("run", "");
  const api = new ApiClient(base);

  const labels = new LabelQueueController(api, runId);
  const finder = new FinderController(api, runId);
  const promos = new PromotionsController(api);

  const tabs = ["label", "find", "promote"] as const;
  let active: (typeof tabs)[number] = "label";

  const nav = document.createElement("nav");
  const body = document.createElement("main");
  root.replaceChildren(nav, body);
  for (const tab of tabs) {
    const btn = document.createElement("button");
    btn.textContent = tab;
    btn.addEventListener("click", () => {
      active = tab;
      render();
    });
    nav.appendChild(btn);
  }

  function render(): void {
    if (active === "label") renderLabelQueue(body, labels, api);
    else if (active === "find") renderFinder(body, finder, api);
    else renderPromotions(body, promos);
  }

  labels.onChange(render);
  finder.onChange(render);
  promos.onChange(render);

  document.addEventListener("keydown", (ev) => {
    if (active === "label") {
      if (/^[0-9]$/.test(ev.key)) void labels.pressDigit(Number(ev.key));
      else if (ev.key === "s" || ev.key === "S") void labels.skip();
      else if (ev.key === "ArrowRight") labels.move(1);
      else if (ev.key === "ArrowLeft") labels.move(-1);
    } else if (active === "find" && (ev.key === "n" || ev.key === "N")) {
      void finder.noneMatch();
    }
  });

  async function poll(): Promise<void> {
    try {
      await Promise.all([labels.refresh(), finder.refresh(), promos.refresh()]);
    } catch {
      const banner = document.createElement("div");
      banner.className = "notice";
      banner.textContent = "server unreachable; retrying";
      body.prepend(banner);
    }
    setTimeout(() => void poll(), POLL_MS);
  }

  void poll();
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  boot(document.getElementById("app") as HTMLElement);
}
