import { createServer, Server } from 'node:http';

import { readCorpus } from './jsonl.js';

export type MockMode = 'echo' | 'empty' | 'fixed';

export interface MockOptions {
  mode: MockMode;
  /** Corpus file backing echo mode: prompts answer with their gold completion. */
  corpusPath?: string;
  /** Response text for fixed mode. */
  fixedText?: string;
}

/** One-route endpoint: POST {"prompt"} -> {"output_text"}. */
export function createMockServer(options: MockOptions): Server {
  let byPrompt = new Map<string, string>();
  if (options.mode === 'echo') {
    if (!options.corpusPath) {
      throw new Error('echo mode needs a corpus file');
    }
    byPrompt = new Map(readCorpus(options.corpusPath).map((r) => [r.prompt, r.completion]));
  }

  return createServer((req, res) => {
    if (req.method !== 'POST') {
      res.writeHead(405).end();
      return;
    }
    let body = '';
    req.on('data', (chunk) => (body += chunk));
    req.on('end', () => {
      let prompt: string;
      try {
        const parsed = JSON.parse(body) as { prompt?: unknown };
        if (typeof parsed.prompt !== 'string') throw new Error('missing prompt');
        prompt = parsed.prompt;
      } catch (err) {
        res.writeHead(400, { 'content-type': 'application/json' });
        res.end(JSON.stringify({ error: String(err) }));
        return;
      }
      let output = '';
      if (options.mode === 'echo') {
        output = byPrompt.get(prompt) ?? '';
      } else if (options.mode === 'fixed') {
        output = options.fixedText ?? '';
      }
      res.writeHead(200, { 'content-type': 'application/json' });
      res.end(JSON.stringify({ output_text: output }));
    });
  });
}

export function listen(server: Server, port = 0): Promise<number> {
  return new Promise((resolve, reject) => {
    server.once('error', reject);
    server.listen(port, '127.0.0.1', () => {
      const address = server.address();
      if (address && typeof address === 'object') {
        resolve(address.port);
      } else {
        reject(new Error('could not determine listening port'));
      }
    });
  });
}
