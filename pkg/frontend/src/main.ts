// Browser bootstrap: wires the chat controller to the page. All rendering
// goes through the pure helpers in render.ts.

import { ApiClient } from "./api.js";
import { renderMessage } from "./render.js";
import { ChatController, MemoryStorage, type StorageLike } from "./session.js";

function pickStorage(): StorageLike {
  try {
    window.localStorage.setItem("caloraify.probe", "1");
    window.localStorage.removeItem("caloraify.probe");
    return window.localStorage;
  } catch {
    return new MemoryStorage();
  }
}

function main(): void {
  const messagesEl = document.getElementById("messages") as HTMLDivElement;
  const inputEl = document.getElementById("chat-input") as HTMLInputElement;
  const sendButton = document.getElementById("send-button") as HTMLButtonElement;
  const fileInput = document.getElementById("image-input") as HTMLInputElement;

  const api = new ApiClient(window.location.origin.replace(/:\d+$/, ":8080"));
  const controller = new ChatController(api, pickStorage(), () => {
    messagesEl.innerHTML = controller.messages.map(renderMessage).join("");
    messagesEl.scrollTop = messagesEl.scrollHeight;
    sendButton.disabled = inputEl.value.trim() === "";
  });
  void controller.init();

  const submitText = () => {
    const text = inputEl.value;
    if (!text.trim()) return;
    inputEl.value = "";
    sendButton.disabled = true;
    void controller.sendFollowup(text);
  };

  sendButton.addEventListener("click", submitText);
  inputEl.addEventListener("keydown", (event) => {
    if (event.key === "Enter") submitText();
  });
  inputEl.addEventListener("input", () => {
    sendButton.disabled = inputEl.value.trim() === "";
  });

  fileInput.addEventListener("change", () => {
    const file = fileInput.files?.[0];
    if (!file) return;
    fileInput.value = "";
    void controller.sendImage({ name: file.name, type: file.type, size: file.size, blob: file });
  });

  sendButton.disabled = true;
}

main();
