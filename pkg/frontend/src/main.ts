// Browser shell: reads the endpoint config, mounts the student or instructor
// view, and wires DOM events to the view controllers.

import { GatewayClient } from "./api.js";
import { InstructorView } from "./instructor.js";
import { StudentView } from "./student.js";
import type { GatewayEndpoints } from "./types.js";

function endpointsFromQuery(): GatewayEndpoints {
  const params = new URLSearchParams(window.location.search);
  const base = params.get("host") ?? "http://127.0.0.1";
  return {
    teaching: params.get("teaching") ?? `${base}:8801`,
    autograde: params.get("autograde") ?? `${base}:8802`,
    events: params.get("events") ?? `${base}:8803`,
    feedback: params.get("feedback") ?? `${base}:8804`,
    token: params.get("token") ?? localStorage.getItem("tutorstack_token") ?? "",
  };
}

async function mountStudent(root: HTMLElement, api: GatewayClient): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const userId = params.get("user") ?? "demo-student";
  const lessonId = params.get("lesson") ?? "module-9";
  const view = new StudentView(api, userId, lessonId);
  await view.start();

  const refresh = () => {
    root.innerHTML = view.renderHtml();
    root.querySelectorAll<HTMLTextAreaElement>(".cell textarea").forEach((area) => {
      const cellId = area.closest(".cell")!.getAttribute("data-cell")!;
      area.addEventListener("change", () => void view.saveCell(cellId, area.value));
    });
  };

  const controls = document.createElement("div");
  controls.innerHTML = `
    <input id="chat-input" placeholder="ask the tutor" />
    <button id="chat-send">send</button>
    <input id="video-slider" type="range" min="0" max="3600" value="0" />
    <button id="video-play">play</button>
    <button id="video-pause">pause</button>
    <input id="checkpoint-id" placeholder="checkpoint id" />
    <button id="checkpoint-submit">check progress</button>
    <button id="run-cell">run first cell</button>`;
  root.before(controls);

  controls.querySelector("#chat-send")!.addEventListener("click", async () => {
    const input = controls.querySelector<HTMLInputElement>("#chat-input")!;
    await view.sendChat(input.value);
    input.value = "";
    refresh();
  });
  controls.querySelector("#video-play")!.addEventListener("click", () => view.play());
  controls.querySelector("#video-pause")!.addEventListener("click", () => view.pause());
  controls.querySelector("#video-slider")!.addEventListener("change", (event) => {
    view.seek(Number((event.target as HTMLInputElement).value));
  });
  controls.querySelector("#checkpoint-submit")!.addEventListener("click", async () => {
    const id = controls.querySelector<HTMLInputElement>("#checkpoint-id")!.value;
    await view.submitCheckpoint(id);
    refresh();
  });
  controls.querySelector("#run-cell")!.addEventListener("click", async () => {
    const first = view.cells.keys().next().value;
    if (first) await view.runCell(first);
    refresh();
  });
  window.addEventListener("beforeunload", () => view.end());
  refresh();
}

async function mountInstructor(root: HTMLElement, api: GatewayClient): Promise<void> {
  const view = new InstructorView(api);
  await view.loadLessons();

  const refresh = () => {
    root.innerHTML = view.renderHtml();
    root.querySelectorAll("tbody tr").forEach((row, index) => {
      row.addEventListener("click", () => {
        view.select(view.lessons[index].lesson_id);
        refresh();
      });
    });
  };

  const controls = document.createElement("div");
  controls.innerHTML = `
    <input id="question" placeholder="ask about the selected lesson" size="60" />
    <button id="ask">ask</button>`;
  root.before(controls);
  controls.querySelector("#ask")!.addEventListener("click", async () => {
    const input = controls.querySelector<HTMLInputElement>("#question")!;
    if (view.selected && input.value.trim()) {
      await view.ask(input.value);
      input.value = "";
      refresh();
    }
  });
  refresh();
}

export async function mount(): Promise<void> {
  const root = document.getElementById("app");
  if (!root) return;
  const api = new GatewayClient(endpointsFromQuery());
  const mode = new URLSearchParams(window.location.search).get("mode") ?? "student";
  if (mode === "instructor") {
    await mountInstructor(root, api);
  } else {
    await mountStudent(root, api);
  }
}

if (typeof window !== "undefined" && typeof document !== "undefined") {
  void mount();
}
