import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "happy-dom",
    include: ["tests/**/*.test.ts"],
    // the protocol test spawns the Python service and waits for convergence
    testTimeout: 120_000,
    hookTimeout: 120_000,
  },
});
