/** DOM rendering for the three screens. 28x28 images show at 8x zoom. */

import { ApiClient } from "./api.js";
import { FinderController, LabelQueueController, PromotionsController } from "./controller.js";
import { focusedFind } from "./state.js";

const ZOOM = 8;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className = "",
  text = "",
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text) node.textContent = text;
  return node;
}

function pixelImage(src: string, size = 28 * ZOOM): HTMLImageElement {
  const img = el("img", "pixel");
  img.src = src;
  img.width = size;
  img.height = size;
  img.style.imageRendering = "pixelated";
  return img;
}

export function renderLabelQueue(
  root: HTMLElement,
  ctl: LabelQueueController,
  api: ApiClient,
): void {
  root.replaceChildren();
  const { pending, focus, notice } = ctl.state;
  if (notice) root.appendChild(el("div", "notice", notice));
  if (pending.length === 0) {
    root.appendChild(el("p", "empty", "No pending label tasks."));
    return;
  }
  root.appendChild(el("p", "hint",
    "Digit keys 0-9 label the highlighted sample; S skips; arrows move."));
  const list = el("div", "cards");
  pending.forEach((task, i) => {
    const card = el("div", i === focus ? "card focused" : "card");
    card.dataset.taskId = task.task_id;
    card.appendChild(pixelImage(api.labelImageUrl(task.task_id)));
    card.appendChild(el("div", "meta", `#${task.rank + 1} · sample ${task.origin_index}`));
    card.addEventListener("click", () => {
      ctl.move(i - ctl.state.focus);
    });
    list.appendChild(card);
  });
  root.appendChild(list);
}

export function renderFinder(
  root: HTMLElement,
  ctl: FinderController,
  api: ApiClient,
): void {
  root.replaceChildren();
  const { notice } = ctl.state;
  if (notice) root.appendChild(el("div", "notice", notice));
  const task = focusedFind(ctl.state);
  if (!task) {
    root.appendChild(el("p", "empty", "No pending find tasks."));
    return;
  }
  const row = el("div", "finder");
  const left = el("div", "corrupted");
  left.appendChild(el("h3", "", `Corrupted sample ${task.origin_index}`));
  left.appendChild(pixelImage(api.findImageUrl(task.task_id)));
  const noneBtn = el("button", "none", "None match");
  noneBtn.addEventListener("click", () => void ctl.noneMatch());
  left.appendChild(noneBtn);
  row.appendChild(left);

  const grid = el("div", "candidates");
  task.candidates.forEach((cand, k) => {
    const cell = el("button", "candidate");
    cell.appendChild(pixelImage(api.candidateImageUrl(task.task_id, k), 28 * 4));
    cell.appendChild(el("div", "meta", `train ${cand.train_index} · d=${cand.distance.toFixed(1)}`));
    cell.addEventListener("click", () => void ctl.choose(k));
    grid.appendChild(cell);
  });
  row.appendChild(grid);
  root.appendChild(row);
  root.appendChild(el("p", "meta", `${ctl.state.pending.length} task(s) pending`));
}

export function renderPromotions(root: HTMLElement, ctl: PromotionsController): void {
  root.replaceChildren();
  const { pending, history, activeRef, busy } = ctl.state;
  root.appendChild(el("p", "active", `Active model: ${activeRef ?? "(baseline)"}`));

  if (pending.length === 0) {
    root.appendChild(el("p", "empty", "No pending promotion requests."));
  }
  for (const promo of pending) {
    const card = el("div", "card promo");
    card.dataset.promoId = promo.promo_id;
    card.appendChild(el("div", "meta",
      `${promo.old_q.toFixed(4)} -> ${promo.new_q.toFixed(4)} (Δ ${promo.delta >= 0 ? "+" : ""}${promo.delta.toFixed(4)})`));
    const approve = el("button", "approve", "Approve");
    const reject = el("button", "reject", "Reject");
    approve.disabled = reject.disabled = busy.has(promo.promo_id);
    approve.addEventListener("click", () => {
      approve.disabled = reject.disabled = true;
      void ctl.resolve(promo.promo_id, "approved");
    });
    reject.addEventListener("click", () => {
      approve.disabled = reject.disabled = true;
      void ctl.resolve(promo.promo_id, "rejected");
    });
    card.appendChild(approve);
    card.appendChild(reject);
    root.appendChild(card);
  }

  if (history.length) {
    root.appendChild(el("h3", "", "History"));
    for (const promo of history) {
      root.appendChild(el("div", "meta history",
        `${promo.promo_id}: ${promo.decision} (Δ ${promo.delta >= 0 ? "+" : ""}${promo.delta.toFixed(4)})`));
    }
  }
}
