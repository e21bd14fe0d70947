import { describe, expect, it } from 'vitest';

import { ApiClient, ApiError } from '../src/api';
import { FixtureService, STUDENTS } from './fixtureService';

function client(service: FixtureService, token = ''): ApiClient {
  return new ApiClient('http://svc.test', token, service.fetch);
}

describe('ApiClient', () => {
  it('lists students from the service', async () => {
    const service = new FixtureService();
    const students = await client(service).listStudents();
    expect(students).toEqual(STUDENTS);
  });

  it('sends the bearer token on every call', async () => {
    const service = new FixtureService();
    await client(service, 'sekrit').listStudents();
    const headers = service.requests[0].init?.headers as Record<string, string>;
    expect(headers['Authorization']).toBe('Bearer sekrit');
  });

  it('fetches a prediction', async () => {
    const service = new FixtureService();
    const prediction = await client(service).prediction('student-a');
    expect(prediction.predicted_outcome).toBe('non_completed');
    expect(prediction.risk_probability).toBeCloseTo(0.97);
  });

  it('surfaces service errors with status and detail', async () => {
    const service = new FixtureService();
    await expect(client(service).explanation('nobody')).rejects.toMatchObject({
      status: 404,
    });
    await expect(client(service).explanation('nobody')).rejects.toBeInstanceOf(ApiError);
  });

  it('raises a typed error on infeasible what-if constraints', async () => {
    const service = new FixtureService();
    const frozen = [
      'full_time_status',
      'qualification_percent_completed',
      'ontime_submissions',
      'grade_mark_mean',
      'papers_withdrawn_year',
      'study_mode',
    ];
    await expect(
      client(service).whatIf('student-b', { seed: 1, frozen }),
    ).rejects.toMatchObject({ status: 422 });
  });
});
