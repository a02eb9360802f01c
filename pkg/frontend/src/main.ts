// Browser entry point: a single-page flow through the annotation queue.

import { AnnotationApi } from "./api.js";
import { renderScatterSvg } from "./scatter.js";
import { AnnotationSession } from "./session.js";
import type { PayloadRenderer } from "./scatter.js";

const QUESTION_TEXT: Record<string, string> = {
  attribute_applied: "Was the target attribute faithfully applied?",
  bird_faithful: "Does the bird still resemble the reference class?",
  group_choice: "Which option in this attribute group is present?",
};

export function startApp(
  root: HTMLElement,
  baseUrl = "",
  renderPayload: PayloadRenderer = renderScatterSvg,
): void {
  const api = new AnnotationApi(baseUrl);
  root.innerHTML = `
    <div class="login">
      <label>annotator id <input id="annotator" value=""></label>
      <button id="start">start</button>
    </div>
    <div id="card" hidden>
      <div id="figure"></div>
      <div id="prompt"></div>
      <div id="questions"></div>
      <div id="status"></div>
    </div>
    <pre id="progress"></pre>
  `;
  const card = root.querySelector<HTMLElement>("#card")!;
  const figure = root.querySelector<HTMLElement>("#figure")!;
  const prompt = root.querySelector<HTMLElement>("#prompt")!;
  const questions = root.querySelector<HTMLElement>("#questions")!;
  const status = root.querySelector<HTMLElement>("#status")!;
  const progressBox = root.querySelector<HTMLElement>("#progress")!;

  async function refreshProgress(): Promise<void> {
    const progress = await api.progress();
    progressBox.textContent =
      `completed ${progress.completed_tasks}/${progress.total_tasks} tasks, ` +
      `${progress.records} answers logged`;
  }

  function renderTask(session: AnnotationSession): void {
    const task = session.current;
    if (!task) return;
    card.hidden = false;
    figure.innerHTML = renderPayload(task.payload);
    prompt.textContent = `${task.attribute} — sample ${task.sample_id}`;
    questions.innerHTML = "";
    for (const q of task.questions) {
      const row = document.createElement("div");
      const label = document.createElement("span");
      label.textContent = QUESTION_TEXT[q.name] ?? q.name;
      row.appendChild(label);
      for (const option of q.options) {
        const button = document.createElement("button");
        button.textContent = option;
        button.addEventListener("click", async () => {
          const result = await session.answer(q.name, option);
          status.textContent =
            result.status === "recorded"
              ? `${q.name}: ${option}`
              : `${q.name}: ${result.status} ${result.error ?? ""}`;
          if (session.taskComplete()) {
            await refreshProgress();
            const state = await session.loadNext();
            if (state === "done") {
              card.hidden = true;
              status.textContent = "all assigned tasks are done — thank you";
            } else {
              renderTask(session);
            }
          }
        });
        row.appendChild(button);
      }
      questions.appendChild(row);
    }
  }

  root.querySelector<HTMLButtonElement>("#start")!.addEventListener("click", async () => {
    const annotator = root.querySelector<HTMLInputElement>("#annotator")!.value.trim();
    if (!annotator) {
      status.textContent = "enter an annotator id first";
      return;
    }
    const session = new AnnotationSession(api, annotator);
    try {
      const state = await session.loadNext();
      if (state === "done") {
        status.textContent = "no tasks left for this annotator";
      } else {
        renderTask(session);
      }
      await refreshProgress();
    } catch (err) {
      status.textContent = String(err);
    }
  });
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  startApp(document.getElementById("app")!);
}
