// Minimal DOM scaffold with the same element ids as index.html.

export function mountDom(): void {
  document.body.innerHTML = `
    <div id="error-banner" class="banner hidden"></div>
    <div id="banner" class="banner hidden"></div>
    <div id="messages"></div>
    <button id="start-btn">Start session</button>
    <input id="chat-input" />
    <button id="send-btn">Send</button>
    <button id="end-btn">End</button>
    <div id="stamp-panel"></div>
    <div id="knowledge-panel"></div>
    <div id="recording-panel"></div>
  `;
}
