import { mount } from "./app.js";

mount(document, (window as unknown as { STAMPSY_API_BASE?: string }).STAMPSY_API_BASE ?? "");
