"""mixsel.serializers.results: JSON shapes printed by the management commands."""

from rest_framework import serializers


class FitResultSerializer(serializers.Serializer):
    q = serializers.IntegerField()
    weights = serializers.ListField(child=serializers.FloatField())
    locations = serializers.ListField(child=serializers.ListField(child=serializers.FloatField()))
    loglik = serializers.FloatField()
    iterations = serializers.IntegerField()
    converged = serializers.BooleanField()
    starts_used = serializers.IntegerField()
    best_start_index = serializers.IntegerField()


class OrderRowSerializer(serializers.Serializer):
    q = serializers.IntegerField()
    score = serializers.FloatField()
    penalty = serializers.FloatField()
    criterion = serializers.FloatField()


class OrderEstimateSerializer(serializers.Serializer):
    q_hat = serializers.IntegerField()
    penalty = serializers.CharField()
    n = serializers.IntegerField()
    scan_bound = serializers.IntegerField()
    sieve_radius = serializers.FloatField(allow_null=True)
    table = OrderRowSerializer(many=True)


class SummaryRowSerializer(serializers.Serializer):
    study = serializers.CharField()
    n = serializers.IntegerField()
    penalty_id = serializers.CharField()
    frac_under = serializers.FloatField()
    frac_correct = serializers.FloatField()
    frac_over = serializers.FloatField()
    replicates = serializers.IntegerField()
